#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "error.hpp"
#include "hierarchy.hpp"
#include "plf.hpp"

namespace scaleset {

// Optimal-energy curve rescaled to [0,1] x (0,1]: x = scale / lambda_max,
// value = E(cut) / E(whole image as one region). Carries the exact curve so
// values can be evaluated anywhere, plus a fixed sample grid for reports.
// Mean curves over a corpus drop the exact backing and interpolate.
struct NormalizedCurve {
  double lambda_max = 0.0;
  double d_full = 0.0;  // data term of the single-region partition
  double c_full = 0.0;  // its boundary term
  double e_full = 0.0;  // lambda_max * c_full / d_full
  PlConcave curve;
  bool exact = true;
  std::vector<double> xs;
  std::vector<double> values;

  double value_at(double x) const {
    if (x < 0.0 || x > 1.0) fail(errc::invalid_config, "normalized scale must be in [0,1]");
    if (exact) {
      double lam = x * lambda_max;
      return curve.eval(lam) / (d_full + lam * c_full);
    }
    // Piecewise-linear interpolation over the sample grid.
    if (x <= xs.front()) return values.front();
    if (x >= xs.back()) return values.back();
    std::size_t lo = 0, hi = xs.size() - 1;
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      if (xs[mid] <= x)
        lo = mid;
      else
        hi = mid;
    }
    double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return values[lo] + w * (values[hi] - values[lo]);
  }

  // Closed-form floor of the normalized value; equals x(1+E)/(1+xE).
  double lower_bound_at(double x) const {
    return 1.0 + (x - 1.0) / (1.0 + x * e_full);
  }
};

inline constexpr std::size_t kNormalizedGrid = 256;

// pre: scales assigned. Fails for images whose single-region data term is
// not positive (nothing to normalize against).
inline NormalizedCurve normalize(const Hierarchy& h) {
  NormalizedCurve nc;
  nc.curve = energy_curve(h);
  nc.lambda_max = lambda_max(h);
  nc.d_full = h.nodes[h.root].d;
  nc.c_full = h.nodes[h.root].c;
  if (!(nc.d_full > 0.0))
    fail(errc::undefined_normalization, "single-region data term must be positive");
  nc.e_full = nc.lambda_max * nc.c_full / nc.d_full;

  nc.xs.reserve(kNormalizedGrid + 8);
  for (std::size_t i = 0; i < kNormalizedGrid; ++i)
    nc.xs.push_back(double(i) / double(kNormalizedGrid - 1));
  if (nc.lambda_max > 0.0)
    for (double bp : nc.curve.breakpoints())
      if (bp < nc.lambda_max) nc.xs.push_back(bp / nc.lambda_max);
  std::sort(nc.xs.begin(), nc.xs.end());
  nc.xs.erase(std::unique(nc.xs.begin(), nc.xs.end()), nc.xs.end());
  nc.values.reserve(nc.xs.size());
  for (double x : nc.xs) nc.values.push_back(nc.value_at(x));
  return nc;
}

struct BoundsReport {
  double max_violation = 0.0;  // worst overshoot beyond [lower bound, 1]
  std::size_t violations = 0;  // samples breaking a bound by more than tol
  double worst_x = 0.0;
};

// Verifies lower_bound_at(x) <= value <= 1 on the sample grid.
inline BoundsReport check_bounds(const NormalizedCurve& nc, double tol = 1e-9) {
  if (!nc.exact) fail(errc::invalid_config, "bounds apply to single-image curves only");
  BoundsReport rep;
  for (std::size_t i = 0; i < nc.xs.size(); ++i) {
    double v = nc.values[i];
    double low = nc.lower_bound_at(nc.xs[i]);
    double over = std::max(v - 1.0, low - v);
    if (over > rep.max_violation) {
      rep.max_violation = over;
      rep.worst_x = nc.xs[i];
    }
    if (over > tol) ++rep.violations;
  }
  rep.max_violation = std::max(rep.max_violation, 0.0);
  return rep;
}

// Pointwise mean over a corpus, sampled on the union of the input grids.
// The result has no exact backing and no bound constants.
inline NormalizedCurve mean_curve(std::span<const NormalizedCurve> curves) {
  if (curves.empty()) fail(errc::empty_input, "mean of no curves");
  NormalizedCurve out;
  out.exact = false;
  out.lambda_max = 0.0;
  out.e_full = std::numeric_limits<double>::quiet_NaN();
  out.d_full = out.c_full = std::numeric_limits<double>::quiet_NaN();
  for (const NormalizedCurve& c : curves)
    out.xs.insert(out.xs.end(), c.xs.begin(), c.xs.end());
  std::sort(out.xs.begin(), out.xs.end());
  out.xs.erase(std::unique(out.xs.begin(), out.xs.end()), out.xs.end());
  out.values.reserve(out.xs.size());
  for (double x : out.xs) {
    double acc = 0.0;
    for (const NormalizedCurve& c : curves) acc += c.value_at(x);
    out.values.push_back(acc / double(curves.size()));
  }
  return out;
}

// Area between the single-region line and the optimal-energy curve over
// [0, lambda_max]: how much energy the hierarchy's cuts save in total.
inline double quality_area(const Hierarchy& h) {
  PlConcave curve = energy_curve(h);
  double lmax = lambda_max(h);
  double d = h.nodes[h.root].d;
  double c = h.nodes[h.root].c;
  double line_area = d * lmax + 0.5 * c * lmax * lmax;
  return line_area - integral(curve, 0.0, lmax);
}

}  // namespace scaleset
