#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "error.hpp"

namespace scaleset {

// One linear piece, valid from start to the next segment's start (the last
// piece extends to infinity): value(x) = intercept + slope * x.
struct Segment {
  double start;
  double slope;
  double intercept;

  double value_at(double x) const { return intercept + slope * x; }
};

struct MinWithLineResult;

// Piecewise-linear concave function on [0, inf). Canonical form: first
// segment starts at 0, starts strictly increase, slopes strictly decrease,
// pieces agree at breakpoints by construction.
class PlConcave {
 public:
  PlConcave() : segs_{{0.0, 0.0, 0.0}} {}

  static PlConcave line(double intercept, double slope) {
    PlConcave f;
    f.segs_ = {{0.0, slope, intercept}};
    return f;
  }

  static PlConcave from_segments(std::vector<Segment> segs) {
    if (segs.empty()) fail(errc::invalid_function, "no segments");
    if (segs.front().start != 0.0) fail(errc::invalid_function, "domain must start at 0");
    for (std::size_t i = 1; i < segs.size(); ++i) {
      if (!(segs[i].start > segs[i - 1].start))
        fail(errc::invalid_function, "breakpoints must strictly increase");
      if (!(segs[i].slope < segs[i - 1].slope))
        fail(errc::invalid_function, "slopes must strictly decrease");
    }
    PlConcave f;
    f.segs_ = std::move(segs);
    return f;
  }

  const std::vector<Segment>& segments() const { return segs_; }

  // Index of the piece containing x; pieces are left-closed.
  std::size_t piece_at(double x) const {
    if (x < 0.0) fail(errc::invalid_function, "negative argument");
    std::size_t lo = 0, hi = segs_.size();
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      if (segs_[mid].start <= x)
        lo = mid;
      else
        hi = mid;
    }
    return lo;
  }

  double eval(double x) const { return segs_[piece_at(x)].value_at(x); }
  double slope_at(double x) const { return segs_[piece_at(x)].slope; }

  std::vector<double> breakpoints() const {
    std::vector<double> b;
    for (std::size_t i = 1; i < segs_.size(); ++i) b.push_back(segs_[i].start);
    return b;
  }

 private:
  std::vector<Segment> segs_;

  friend PlConcave sum(const PlConcave&, const PlConcave&);
  friend MinWithLineResult min_with_line(const PlConcave&, double, double);
};

inline PlConcave sum(const PlConcave& a, const PlConcave& b) {
  const auto& sa = a.segments();
  const auto& sb = b.segments();
  std::vector<double> starts;
  starts.reserve(sa.size() + sb.size());
  for (const Segment& s : sa) starts.push_back(s.start);
  for (const Segment& s : sb) starts.push_back(s.start);
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());

  std::vector<Segment> out;
  out.reserve(starts.size());
  for (double x : starts) {
    double slope = a.slope_at(x) + b.slope_at(x);
    double value = a.eval(x) + b.eval(x);
    // Rounding can collapse what is mathematically a strict slope decrease;
    // keep the earlier piece in that case.
    if (!out.empty() && !(slope < out.back().slope)) continue;
    out.push_back({x, slope, value - slope * x});
  }
  PlConcave f;
  f.segs_ = std::move(out);
  return f;
}

struct MinWithLineResult {
  PlConcave envelope;   // min(f, line), concave because the line undercuts f exactly once
  double crossing;      // smallest x where the line is at or below f; 0 if that holds at x=0
};

// Lower envelope of f and the line intercept + slope * x. The line's slope
// must lie strictly below every slope of f, so the gap line - f decreases
// strictly and the crossing is unique.
inline MinWithLineResult min_with_line(const PlConcave& f, double intercept, double slope) {
  const auto& segs = f.segments();
  if (!(slope < segs.back().slope))
    fail(errc::invalid_function, "line slope must be below the function's final slope");

  if (intercept <= f.eval(0.0)) {
    MinWithLineResult r;
    r.envelope = PlConcave::line(intercept, slope);
    r.crossing = 0.0;
    return r;
  }

  double cross = 0.0;
  std::size_t idx = segs.size() - 1;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    // Crossing with this piece's supporting line; slopes differ by precondition.
    double x = (segs[i].intercept - intercept) / (slope - segs[i].slope);
    double end = i + 1 < segs.size() ? segs[i + 1].start : 0.0;
    if (x < segs[i].start) x = segs[i].start;  // rounding guard, crossing is monotone
    if (i + 1 == segs.size() || x < end) {
      cross = x;
      idx = i;
      break;
    }
  }

  std::vector<Segment> out;
  out.reserve(idx + 2);
  for (std::size_t i = 0; i <= idx; ++i) {
    if (segs[i].start >= cross) break;
    out.push_back(segs[i]);
  }
  out.push_back({cross, slope, intercept});
  MinWithLineResult r;
  r.envelope.segs_ = std::move(out);
  r.crossing = cross;
  return r;
}

// Exact integral of f over [a, b].
inline double integral(const PlConcave& f, double a, double b) {
  if (a < 0.0 || b < a) fail(errc::invalid_function, "bad integration range");
  const auto& segs = f.segments();
  double total = 0.0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    double lo = std::max(a, segs[i].start);
    double hi = i + 1 < segs.size() ? std::min(b, segs[i + 1].start) : b;
    if (hi <= lo) continue;
    total += segs[i].intercept * (hi - lo) + segs[i].slope * 0.5 * (hi * hi - lo * lo);
  }
  return total;
}

}  // namespace scaleset
