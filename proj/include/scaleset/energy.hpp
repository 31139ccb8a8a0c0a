#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <map>
#include <ranges>
#include <span>
#include <vector>

#include "error.hpp"
#include "regions.hpp"

namespace scaleset {

// Anything that exposes per-region statistics and weighted adjacency can
// drive the merge-scale machinery: the immutable Rag, the builders' mutable
// merge graph, or a hand-built fixture in a test.
template <class G>
concept RegionGraph = requires(const G& g, std::uint32_t v) {
  { g.vertex_count() } -> std::convertible_to<std::uint32_t>;
  { g.stats(v) } -> std::convertible_to<const RegionStats&>;
  { g.neighbors(v) } -> std::ranges::input_range;
  requires std::convertible_to<std::ranges::range_value_t<decltype(g.neighbors(v))>,
                               NeighborLink>;
};

enum class energy_kind { piecewise_constant, contrast };

// Data term family. piecewise_constant scores a region by its squared
// error. contrast additionally scales it by 1 + sigmoid(Int/Ext) where Int
// is the strongest swallowed boundary and Ext the weakest surviving one.
struct EnergyModel {
  energy_kind kind = energy_kind::piecewise_constant;
  double sigmoid_center = 0.5;
  double sigmoid_steepness = 8.0;

  static EnergyModel piecewise_constant() { return {}; }
  static EnergyModel contrast(double center = 0.5, double steepness = 8.0) {
    return {energy_kind::contrast, center, steepness};
  }
};

inline constexpr double kNoExternal = std::numeric_limits<double>::infinity();
inline constexpr std::uint32_t kUnboundedCard = 0xFFFFFFFFu;

// Degree cap for the exhaustive subset search when the cardinality is
// unbounded; beyond this the enumeration would be intractable anyway.
inline constexpr std::uint32_t kMaxUnboundedDegree = 30;

// Int(R): strongest mean gradient among boundaries swallowed inside R, 0
// for base regions. Ext(R): weakest mean gradient among R's surviving
// boundaries, +inf when R has no neighbor.
struct ContrastState {
  std::vector<double> internal;
  std::vector<double> external;
};

template <RegionGraph G>
double weakest_external(const G& g, std::uint32_t v) {
  double ext = kNoExternal;
  for (const NeighborLink& l : g.neighbors(v)) ext = std::min(ext, mean_gradient(l));
  return ext;
}

template <RegionGraph G>
ContrastState make_contrast_state(const G& g) {
  ContrastState cs;
  std::uint32_t n = g.vertex_count();
  cs.internal.assign(n, 0.0);
  cs.external.resize(n);
  for (std::uint32_t v = 0; v < n; ++v) cs.external[v] = weakest_external(g, v);
  return cs;
}

// Ratio convention: Ext = 0 saturates the sigmoid to 1 (the region already
// swallowed a boundary at least as strong as anything around it); no
// neighbors means ratio 0.
inline double contrast_factor(const EnergyModel& m, double internal, double external) {
  double ratio;
  if (external == 0.0)
    return 1.0;
  else if (external == kNoExternal)
    ratio = 0.0;
  else
    ratio = internal / external;
  return 1.0 / (1.0 + std::exp(-m.sigmoid_steepness * (ratio - m.sigmoid_center)));
}

inline double d_term(const EnergyModel& m, const RegionStats& s, double internal = 0.0,
                     double external = kNoExternal) {
  double se = squared_error(s);
  if (m.kind == energy_kind::piecewise_constant) return se;
  return se * (1.0 + contrast_factor(m, internal, external));
}

// Bundles everything candidate evaluation needs. region_d, when present,
// supplies the data term of each live region (builders freeze these at node
// creation); otherwise terms are computed from the graph on the fly.
struct EnergyContext {
  EnergyModel model;
  const ContrastState* contrast = nullptr;
  const std::vector<double>* region_d = nullptr;
};

template <RegionGraph G>
double region_d_term(const G& g, std::uint32_t v, const EnergyContext& ctx) {
  if (ctx.region_d) return (*ctx.region_d)[v];
  if (ctx.model.kind == energy_kind::contrast) {
    if (!ctx.contrast) fail(errc::invalid_config, "contrast model needs a contrast state");
    return d_term(ctx.model, g.stats(v), ctx.contrast->internal[v], ctx.contrast->external[v]);
  }
  return d_term(ctx.model, g.stats(v));
}

struct SubsetChoice {
  double lambda;
  std::vector<std::uint32_t> members;  // sorted ids, center included
};

namespace detail {

// Tie order for candidates of one center: scale, then fewer members, then
// lexicographically smaller id set.
inline bool candidate_before(double la, const std::vector<std::uint32_t>& a, double lb,
                             const std::vector<std::uint32_t>& b) {
  if (la != lb) return la < lb;
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

template <RegionGraph G>
struct SubsetSearch {
  const G& g;
  const EnergyContext& ctx;
  std::uint32_t center;
  std::uint32_t max_card;

  std::vector<NeighborLink> nbr;            // center's links, sorted by id
  std::vector<std::vector<double>> shared;  // nbr x nbr boundary lengths
  std::vector<std::vector<double>> grad;    // nbr x nbr mean gradients
  std::vector<std::size_t> chosen;

  struct State {
    RegionStats acc;
    double ishared = 0.0;
    double d_sum = 0.0;
    double int_max = 0.0;
  };
  State st;

  bool found = false;
  SubsetChoice best;

  SubsetSearch(const G& graph, const EnergyContext& context, std::uint32_t center_id,
               std::uint32_t card)
      : g(graph), ctx(context), center(center_id), max_card(card) {
    for (const NeighborLink& l : g.neighbors(center)) nbr.push_back(l);
    std::sort(nbr.begin(), nbr.end(),
              [](const NeighborLink& a, const NeighborLink& b) { return a.id < b.id; });
    std::size_t d = nbr.size();
    shared.assign(d, std::vector<double>(d, 0.0));
    grad.assign(d, std::vector<double>(d, 0.0));
    std::map<std::uint32_t, std::size_t> index;
    for (std::size_t i = 0; i < d; ++i) index[nbr[i].id] = i;
    for (std::size_t i = 0; i < d; ++i) {
      for (const NeighborLink& l : g.neighbors(nbr[i].id)) {
        auto it = index.find(l.id);
        if (it == index.end() || it->second <= i) continue;
        shared[i][it->second] = shared[it->second][i] = l.shared_len;
        grad[i][it->second] = grad[it->second][i] = mean_gradient(l);
      }
    }
    st.acc = g.stats(center);
    st.d_sum = region_d_term(g, center, ctx);
    if (ctx.model.kind == energy_kind::contrast) {
      if (!ctx.contrast) fail(errc::invalid_config, "contrast model needs a contrast state");
      st.int_max = ctx.contrast->internal[center];
    }
  }

  std::vector<std::uint32_t> member_ids() const {
    std::vector<std::uint32_t> ids{center};
    for (std::size_t i : chosen) ids.push_back(nbr[i].id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  double candidate_lambda() const {
    RegionStats merged = st.acc;
    merged.perimeter -= 2.0 * st.ishared;
    double dm;
    if (ctx.model.kind == energy_kind::piecewise_constant) {
      dm = d_term(ctx.model, merged);
    } else {
      // Surviving boundary of the candidate: fuse member links per outside
      // neighbor, then take the weakest mean gradient.
      std::map<std::uint32_t, std::pair<double, double>> outside;
      auto in_w = [&](std::uint32_t id) {
        if (id == center) return true;
        for (std::size_t i : chosen)
          if (nbr[i].id == id) return true;
        return false;
      };
      auto collect = [&](std::uint32_t v) {
        for (const NeighborLink& l : g.neighbors(v)) {
          if (in_w(l.id)) continue;
          auto& acc = outside[l.id];
          acc.first += l.shared_len;
          acc.second += l.grad_sum;
        }
      };
      collect(center);
      for (std::size_t i : chosen) collect(nbr[i].id);
      double ext = kNoExternal;
      for (const auto& [id, acc] : outside) ext = std::min(ext, acc.second / acc.first);
      dm = d_term(ctx.model, merged, st.int_max, ext);
    }
    double num = dm - st.d_sum;
    double lam = num / (2.0 * st.ishared);
    return lam > 0.0 ? lam : 0.0;
  }

  void offer() {
    double lam = candidate_lambda();
    if (!found) {
      found = true;
      best.lambda = lam;
      best.members = member_ids();
      return;
    }
    if (lam > best.lambda) return;
    std::vector<std::uint32_t> ids = member_ids();
    if (candidate_before(lam, ids, best.lambda, best.members)) {
      best.lambda = lam;
      best.members = std::move(ids);
    }
  }

  void push(std::size_t i) {
    const NeighborLink& l = nbr[i];
    const RegionStats& s = g.stats(l.id);
    st.acc.area += s.area;
    for (int c = 0; c < 3; ++c) st.acc.sum[c] += s.sum[c];
    st.acc.sumsq += s.sumsq;
    st.acc.perimeter += s.perimeter;
    st.ishared += l.shared_len;
    if (ctx.model.kind == energy_kind::contrast) {
      st.int_max = std::max(st.int_max, mean_gradient(l));
      if (ctx.contrast) st.int_max = std::max(st.int_max, ctx.contrast->internal[l.id]);
    }
    for (std::size_t j : chosen) {
      st.ishared += shared[j][i];
      if (ctx.model.kind == energy_kind::contrast && shared[j][i] > 0.0)
        st.int_max = std::max(st.int_max, grad[j][i]);
    }
    st.d_sum += region_d_term(g, l.id, ctx);
    chosen.push_back(i);
  }

  void explore(std::size_t from) {
    for (std::size_t i = from; i < nbr.size(); ++i) {
      State saved = st;
      push(i);
      offer();
      if (chosen.size() + 1 < max_card) explore(i + 1);
      chosen.pop_back();
      st = saved;
    }
  }
};

}  // namespace detail

// Scale of appearance of the merge center + others: extra data term over
// vanished boundary. others must be distinct neighbors of center. The
// result is clamped at 0.
template <RegionGraph G>
double lambda_plus_subset(const G& g, std::uint32_t center, std::span<const std::uint32_t> others,
                          const EnergyContext& ctx) {
  if (center >= g.vertex_count()) fail(errc::invalid_subset, "center out of range");
  if (others.empty()) fail(errc::invalid_subset, "merge needs at least two regions");

  detail::SubsetSearch<G> search(g, ctx, center, kUnboundedCard);
  std::vector<std::uint32_t> want(others.begin(), others.end());
  std::sort(want.begin(), want.end());
  for (std::size_t i = 1; i < want.size(); ++i)
    if (want[i] == want[i - 1]) fail(errc::invalid_subset, "duplicate member");
  for (std::uint32_t w : want) {
    if (w == center) fail(errc::self_merge, "center listed among members");
    std::size_t pos = search.nbr.size();
    for (std::size_t i = 0; i < search.nbr.size(); ++i)
      if (search.nbr[i].id == w) {
        pos = i;
        break;
      }
    if (pos == search.nbr.size())
      fail(errc::non_adjacent_merge, "member does not touch the merge center");
    search.push(pos);
  }
  return search.candidate_lambda();
}

template <RegionGraph G>
double lambda_plus_pair(const G& g, std::uint32_t a, std::uint32_t b, const EnergyContext& ctx) {
  if (a == b) fail(errc::self_merge, "cannot merge a region with itself");
  const std::uint32_t other[1] = {b};
  return lambda_plus_subset(g, a, other, ctx);
}

template <RegionGraph G>
double lambda_plus_pair(const G& g, std::uint32_t a, std::uint32_t b,
                        const EnergyModel& model = EnergyModel::piecewise_constant()) {
  EnergyContext ctx{model, nullptr, nullptr};
  return lambda_plus_pair(g, a, b, ctx);
}

// Cheapest extension of one region: minimizes the scale of appearance over
// all neighbor subsets of size < max_card, tie-breaking toward fewer and
// lexicographically smaller members. Unbounded search refuses degrees
// beyond kMaxUnboundedDegree.
template <RegionGraph G>
SubsetChoice best_subset(const G& g, std::uint32_t center, const EnergyContext& ctx,
                         std::uint32_t max_card = kUnboundedCard) {
  if (center >= g.vertex_count()) fail(errc::invalid_subset, "center out of range");
  if (max_card < 2) fail(errc::invalid_config, "merge cardinality must allow two regions");

  detail::SubsetSearch<G> search(g, ctx, center, max_card);
  if (search.nbr.empty()) fail(errc::isolated_region, "region has no neighbor to merge with");
  if (max_card == kUnboundedCard && search.nbr.size() > kMaxUnboundedDegree)
    fail(errc::neighborhood_too_large, "too many neighbors for exhaustive subset search");
  search.explore(0);
  return search.best;
}

template <RegionGraph G>
SubsetChoice best_subset(const G& g, std::uint32_t center,
                         const EnergyModel& model = EnergyModel::piecewise_constant(),
                         std::uint32_t max_card = kUnboundedCard) {
  EnergyContext ctx{model, nullptr, nullptr};
  return best_subset(g, center, ctx, max_card);
}

}  // namespace scaleset
