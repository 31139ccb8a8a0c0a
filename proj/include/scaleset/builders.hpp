#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <span>
#include <vector>

#include "energy.hpp"
#include "error.hpp"
#include "hierarchy.hpp"
#include "regions.hpp"

namespace scaleset {

enum class heuristic { sm2, smk, sm, mm, mm1 };

// k bounds the number of regions a single merge may fuse (smk only).
// Ordering is always id-based and seed-free, so rebuilds are reproducible.
struct BuilderConfig {
  heuristic method = heuristic::sm2;
  std::uint32_t k = 3;
  EnergyModel model;
  static constexpr bool deterministic_tie_break = true;
};

struct BuildMetrics {
  std::uint32_t levels = 0;
  std::vector<double> vertex_ratio_per_level;
  std::vector<double> edge_ratio_per_level;  // NaN where the coarser level has no edge
  std::uint64_t merges = 0;
  double wall_ms = 0.0;
  double first_merge_lambda = 0.0;
};

// ---------------------------------------------------------------------------
// Boolean matching rounds over edge scores.

struct EdgeScore {
  std::uint32_t u, v;
  double lambda;
};

struct MatchState {
  std::vector<char> p;        // fixpoint selection, a maximal matching
  std::vector<char> p_first;  // selection after the first round only
  std::vector<char> q;        // edges with no selected edge in their neighborhood
  std::uint32_t iterations = 0;
};

// Local-minimum selection iterated to fixpoint. An edge joins the matching
// when it is the smallest of its neighborhood (itself plus all edges sharing
// an endpoint); later rounds extend the selection among edges whose whole
// neighborhood is still unselected. Ties fall back to endpoint ids, so the
// "smallest" edge is always unique and the selection stays a matching.
inline MatchState mm_round(std::span<const EdgeScore> edges, std::uint32_t vertex_count) {
  std::size_t m = edges.size();
  MatchState ms;
  ms.p.assign(m, 0);
  ms.p_first.assign(m, 0);
  ms.q.assign(m, 0);
  if (m == 0) return ms;

  std::vector<std::vector<std::uint32_t>> inc(vertex_count);
  for (std::size_t i = 0; i < m; ++i) {
    const EdgeScore& e = edges[i];
    if (e.u == e.v) fail(errc::self_merge, "edge endpoints must differ");
    if (e.u >= vertex_count || e.v >= vertex_count)
      fail(errc::invalid_subset, "edge endpoint out of range");
    inc[e.u].push_back(std::uint32_t(i));
    inc[e.v].push_back(std::uint32_t(i));
  }

  auto before = [&](std::uint32_t a, std::uint32_t b) {
    if (edges[a].lambda != edges[b].lambda) return edges[a].lambda < edges[b].lambda;
    std::uint32_t alo = std::min(edges[a].u, edges[a].v), ahi = std::max(edges[a].u, edges[a].v);
    std::uint32_t blo = std::min(edges[b].u, edges[b].v), bhi = std::max(edges[b].u, edges[b].v);
    if (alo != blo) return alo < blo;
    if (ahi != bhi) return ahi < bhi;
    return a < b;
  };

  auto for_neighborhood = [&](std::uint32_t e, auto&& fn) {
    for (std::uint32_t f : inc[edges[e].u]) fn(f);
    for (std::uint32_t f : inc[edges[e].v])
      if (edges[f].u != edges[e].u && edges[f].v != edges[e].u) fn(f);
  };

  auto recompute_q = [&] {
    for (std::uint32_t e = 0; e < m; ++e) {
      char val = 1;
      for_neighborhood(e, [&](std::uint32_t f) {
        if (ms.p[f]) val = 0;
      });
      ms.q[e] = val;
    }
  };

  // First round: minimum of the full neighborhood.
  for (std::uint32_t e = 0; e < m; ++e) {
    char sel = 1;
    for_neighborhood(e, [&](std::uint32_t f) {
      if (f != e && before(f, e)) sel = 0;
    });
    ms.p[e] = sel;
  }
  ms.p_first = ms.p;
  ms.iterations = 1;
  recompute_q();

  for (;;) {
    std::vector<char> next = ms.p;
    bool changed = false;
    for (std::uint32_t e = 0; e < m; ++e) {
      if (ms.p[e] || !ms.q[e]) continue;
      char sel = 1;
      for_neighborhood(e, [&](std::uint32_t f) {
        if (f != e && ms.q[f] && before(f, e)) sel = 0;
      });
      if (sel) {
        next[e] = 1;
        changed = true;
      }
    }
    if (!changed) break;
    ms.p = std::move(next);
    ++ms.iterations;
    recompute_q();
  }
  return ms;
}

namespace detail {

// Mutable coarsening graph for the sequential builders. Vertex ids double
// as hierarchy node ids: the initial regions are 0..n-1 and every merge
// appends one vertex, so parents always get larger ids than their children.
class MergeGraph {
 public:
  MergeGraph(const Rag& rag, const EnergyModel& model) : model_(model) {
    std::uint32_t n = rag.vertex_count();
    stats_.reserve(2 * n);
    adj_.reserve(2 * n);
    for (std::uint32_t v = 0; v < n; ++v) {
      stats_.push_back(rag.stats(v));
      auto nb = rag.neighbors(v);
      adj_.emplace_back(nb.begin(), nb.end());
    }
    alive_.assign(n, 1);
    alive_count_ = n;
    edge_count_ = rag.edge_count();
    if (model_.kind == energy_kind::contrast) {
      cs_.internal.assign(n, 0.0);
      cs_.external.resize(n);
      for (std::uint32_t v = 0; v < n; ++v) cs_.external[v] = weakest_external(*this, v);
    }
    d_.resize(n);
    for (std::uint32_t v = 0; v < n; ++v)
      d_[v] = model_.kind == energy_kind::contrast
                  ? d_term(model_, stats_[v], 0.0, cs_.external[v])
                  : d_term(model_, stats_[v]);
  }

  std::uint32_t vertex_count() const { return std::uint32_t(stats_.size()); }
  const RegionStats& stats(std::uint32_t v) const { return stats_[v]; }
  std::span<const NeighborLink> neighbors(std::uint32_t v) const {
    return {adj_[v].data(), adj_[v].size()};
  }

  bool alive(std::uint32_t v) const { return alive_[v]; }
  std::uint32_t alive_count() const { return alive_count_; }
  std::size_t edge_count() const { return edge_count_; }
  double frozen_d(std::uint32_t v) const { return d_[v]; }
  double internal_contrast(std::uint32_t v) const {
    return model_.kind == energy_kind::contrast ? cs_.internal[v] : 0.0;
  }

  EnergyContext context() const {
    return {model_, model_.kind == energy_kind::contrast ? &cs_ : nullptr, &d_};
  }

  // Fuses the sorted member set into one new vertex and returns its id.
  std::uint32_t merge(const std::vector<std::uint32_t>& members) {
    if (members.size() < 2) fail(errc::invalid_subset, "merge needs at least two regions");
    for (std::uint32_t v : members)
      if (v >= vertex_count() || !alive_[v]) fail(errc::invalid_subset, "merge of dead region");
    auto in_members = [&](std::uint32_t id) {
      return std::binary_search(members.begin(), members.end(), id);
    };

    RegionStats merged;
    double ishared = 0.0;
    double int_max = 0.0;
    std::size_t internal_links = 0;
    for (std::uint32_t v : members) {
      const RegionStats& s = stats_[v];
      merged.area += s.area;
      for (int c = 0; c < 3; ++c) merged.sum[c] += s.sum[c];
      merged.sumsq += s.sumsq;
      merged.perimeter += s.perimeter;
      if (model_.kind == energy_kind::contrast)
        int_max = std::max(int_max, cs_.internal[v]);
      for (const NeighborLink& l : adj_[v]) {
        if (!in_members(l.id)) continue;
        if (l.id > v) {
          ishared += l.shared_len;
          ++internal_links;
          if (model_.kind == energy_kind::contrast)
            int_max = std::max(int_max, mean_gradient(l));
        }
      }
    }
    if (ishared <= 0.0) fail(errc::non_adjacent_merge, "merge members share no boundary");
    merged.perimeter -= 2.0 * ishared;

    // Fuse outward links, accumulating in neighbor-id order.
    std::map<std::uint32_t, std::pair<double, double>> outside;
    std::size_t external_entries = 0;
    for (std::uint32_t v : members) {
      for (const NeighborLink& l : adj_[v]) {
        if (in_members(l.id)) continue;
        auto& acc = outside[l.id];
        acc.first += l.shared_len;
        acc.second += l.grad_sum;
        ++external_entries;
      }
    }

    std::uint32_t t = vertex_count();
    stats_.push_back(merged);
    adj_.emplace_back();
    alive_.push_back(1);
    for (const auto& [o, acc] : outside) {
      adj_[t].push_back({o, acc.first, acc.second});
      auto& lst = adj_[o];
      lst.erase(std::remove_if(lst.begin(), lst.end(),
                               [&](const NeighborLink& l) { return in_members(l.id); }),
                lst.end());
      lst.push_back({t, acc.first, acc.second});  // t is the largest id, order kept
    }
    for (std::uint32_t v : members) {
      alive_[v] = 0;
      adj_[v].clear();
      adj_[v].shrink_to_fit();
    }
    alive_count_ -= std::uint32_t(members.size()) - 1;
    edge_count_ -= internal_links;
    edge_count_ -= external_entries - outside.size();

    double ext = kNoExternal;
    for (const NeighborLink& l : adj_[t]) ext = std::min(ext, mean_gradient(l));
    if (model_.kind == energy_kind::contrast) {
      cs_.internal.push_back(int_max);
      cs_.external.push_back(ext);
      for (const NeighborLink& l : adj_[t])
        cs_.external[l.id] = weakest_external(*this, l.id);
      d_.push_back(d_term(model_, merged, int_max, ext));
    } else {
      d_.push_back(d_term(model_, merged));
    }
    return t;
  }

 private:
  EnergyModel model_;
  std::vector<RegionStats> stats_;
  std::vector<std::vector<NeighborLink>> adj_;
  std::vector<char> alive_;
  std::uint32_t alive_count_ = 0;
  std::size_t edge_count_ = 0;
  ContrastState cs_;
  std::vector<double> d_;
};

inline std::uint32_t max_card_of(const BuilderConfig& cfg) {
  switch (cfg.method) {
    case heuristic::sm2:
      return 2;
    case heuristic::smk:
      if (cfg.k < 2) fail(errc::invalid_config, "cardinality bound must be at least 2");
      return cfg.k;
    case heuristic::sm:
      return kUnboundedCard;
    default:
      fail(errc::invalid_config, "not a sequential heuristic");
  }
}

inline Hierarchy base_hierarchy(const Rag& rag, std::uint32_t width, std::uint32_t height,
                                const EnergyModel& model) {
  Hierarchy h;
  h.width = width;
  h.height = height;
  h.channels = rag.channels();
  std::uint32_t n = rag.vertex_count();
  h.nodes.resize(n);
  h.base_owner.resize(n);
  ContrastState cs;
  if (model.kind == energy_kind::contrast) cs = make_contrast_state(rag);
  for (std::uint32_t v = 0; v < n; ++v) {
    HierarchyNode& node = h.nodes[v];
    node.stats = rag.stats(v);
    node.c = node.stats.perimeter;
    node.d = model.kind == energy_kind::contrast
                 ? d_term(model, node.stats, 0.0, cs.external[v])
                 : d_term(model, node.stats);
    h.base_owner[v] = v;
  }
  return h;
}

}  // namespace detail

// Scale-climbing build: repeatedly executes the globally cheapest merge,
// where each region proposes its best neighbor subset of size < max_card.
// Regions whose candidates a merge may have invalidated (the new vertex,
// its neighbors, and theirs) are re-scored. Returns the raw merge tree;
// scales are assigned afterwards by the hierarchy pass.
inline Hierarchy build_sequential(const Rag& rag, std::uint32_t width, std::uint32_t height,
                                  const BuilderConfig& cfg, BuildMetrics* metrics = nullptr) {
  std::uint32_t max_card = detail::max_card_of(cfg);
  Hierarchy h = detail::base_hierarchy(rag, width, height, cfg.model);
  std::uint32_t n = rag.vertex_count();
  if (n == 1) {
    h.root = 0;
    return h;
  }

  detail::MergeGraph g(rag, cfg.model);
  EnergyContext ctx = g.context();

  struct Entry {
    double lambda;
    std::uint32_t min_id, max_id;
    std::uint32_t size;
    std::vector<std::uint32_t> members;
    std::uint32_t center;
    std::uint64_t version;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.lambda != b.lambda) return a.lambda > b.lambda;
      if (a.min_id != b.min_id) return a.min_id > b.min_id;
      if (a.max_id != b.max_id) return a.max_id > b.max_id;
      if (a.size != b.size) return a.size > b.size;
      if (a.members != b.members) return a.members > b.members;
      return a.center > b.center;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, Later> heap;
  std::vector<std::uint64_t> version(n, 0);

  auto push_candidate = [&](std::uint32_t v) {
    SubsetChoice c = best_subset(g, v, ctx, max_card);
    Entry e;
    e.lambda = c.lambda;
    e.min_id = c.members.front();
    e.max_id = c.members.back();
    e.size = std::uint32_t(c.members.size());
    e.members = std::move(c.members);
    e.center = v;
    e.version = version[v];
    heap.push(std::move(e));
  };
  for (std::uint32_t v = 0; v < n; ++v) push_candidate(v);

  bool first = true;
  while (g.alive_count() > 1) {
    Entry top = heap.top();
    heap.pop();
    if (top.center >= version.size() || version[top.center] != top.version ||
        !g.alive(top.center))
      continue;
    bool stale = false;
    for (std::uint32_t v : top.members)
      if (!g.alive(v)) stale = true;
    if (stale) continue;

    std::uint32_t before_v = g.alive_count();
    std::size_t before_e = g.edge_count();
    std::uint32_t t = g.merge(top.members);

    HierarchyNode node;
    node.children = top.members;
    node.stats = g.stats(t);
    node.c = node.stats.perimeter;
    node.d = g.frozen_d(t);
    h.nodes.push_back(std::move(node));
    for (std::uint32_t v : top.members) h.nodes[v].parent = t;

    if (metrics) {
      if (first) metrics->first_merge_lambda = top.lambda;
      metrics->merges += 1;
      metrics->levels += 1;
      metrics->vertex_ratio_per_level.push_back(double(before_v) / double(g.alive_count()));
      metrics->edge_ratio_per_level.push_back(
          g.edge_count() ? double(before_e) / double(g.edge_count())
                         : std::numeric_limits<double>::quiet_NaN());
    }
    first = false;

    if (g.alive_count() == 1) break;

    // Re-score everything whose candidate set may mention the merged area.
    std::set<std::uint32_t> affected{t};
    for (const NeighborLink& l : g.neighbors(t)) {
      affected.insert(l.id);
      for (const NeighborLink& ll : g.neighbors(l.id)) affected.insert(ll.id);
    }
    version.resize(g.vertex_count(), 0);
    for (std::uint32_t v : affected) {
      if (!g.alive(v)) continue;
      ++version[v];
      push_candidate(v);
    }
  }
  h.root = h.node_count() - 1;
  return h;
}

// Matching-based build: every level scores all adjacencies, selects an
// independent edge set (the fixpoint matching, or just its first round for
// mm1), and contracts the whole selection at once. Returns the raw tree.
inline Hierarchy build_parallel(const Rag& rag, std::uint32_t width, std::uint32_t height,
                                const BuilderConfig& cfg, BuildMetrics* metrics = nullptr) {
  if (cfg.method != heuristic::mm && cfg.method != heuristic::mm1)
    fail(errc::invalid_config, "not a matching heuristic");
  Hierarchy h = detail::base_hierarchy(rag, width, height, cfg.model);
  bool contrast = cfg.model.kind == energy_kind::contrast;

  Rag cur = rag;
  std::vector<NodeId> node_of(cur.vertex_count());
  std::vector<double> d_of(cur.vertex_count());
  std::vector<double> internal_of(cur.vertex_count(), 0.0);
  for (std::uint32_t v = 0; v < cur.vertex_count(); ++v) {
    node_of[v] = v;
    d_of[v] = h.nodes[v].d;
  }

  bool first = true;
  while (cur.vertex_count() > 1) {
    ContrastState cs;
    if (contrast) {
      cs.internal = internal_of;
      cs.external.resize(cur.vertex_count());
      for (std::uint32_t v = 0; v < cur.vertex_count(); ++v)
        cs.external[v] = weakest_external(cur, v);
    }
    EnergyContext ctx{cfg.model, contrast ? &cs : nullptr, &d_of};

    std::vector<EdgeRef> eds = cur.edges();
    std::vector<EdgeScore> scores(eds.size());
    for (std::size_t i = 0; i < eds.size(); ++i)
      scores[i] = {eds[i].u, eds[i].v, lambda_plus_pair(cur, eds[i].u, eds[i].v, ctx)};

    MatchState ms = mm_round(scores, cur.vertex_count());
    const std::vector<char>& chosen = cfg.method == heuristic::mm ? ms.p : ms.p_first;

    std::vector<std::vector<std::uint32_t>> groups;
    double level_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < eds.size(); ++i) {
      if (!chosen[i]) continue;
      groups.push_back({eds[i].u, eds[i].v});
      level_min = std::min(level_min, scores[i].lambda);
    }

    Rag::Contraction next = cur.contract(groups);

    std::vector<NodeId> next_node(next.graph.vertex_count(), kNoNode);
    std::vector<double> next_d(next.graph.vertex_count(), 0.0);
    std::vector<double> next_internal(next.graph.vertex_count(), 0.0);
    for (std::size_t i = 0; i < eds.size(); ++i) {
      if (!chosen[i]) continue;
      std::uint32_t u = eds[i].u, v = eds[i].v;
      std::uint32_t t = next.vertex_map[u];
      NodeId id = h.node_count();
      HierarchyNode node;
      node.children = {std::min(node_of[u], node_of[v]), std::max(node_of[u], node_of[v])};
      node.stats = next.graph.stats(t);
      node.c = node.stats.perimeter;
      double int_max = 0.0;
      if (contrast) {
        int_max = std::max({internal_of[u], internal_of[v], eds[i].grad_sum / eds[i].shared_len});
        node.d = d_term(cfg.model, node.stats, int_max, weakest_external(next.graph, t));
      } else {
        node.d = d_term(cfg.model, node.stats);
      }
      h.nodes.push_back(std::move(node));
      h.nodes[node_of[u]].parent = id;
      h.nodes[node_of[v]].parent = id;
      next_node[t] = id;
      next_d[t] = h.nodes[id].d;
      next_internal[t] = int_max;
    }
    for (std::uint32_t v = 0; v < cur.vertex_count(); ++v) {
      std::uint32_t t = next.vertex_map[v];
      if (next_node[t] == kNoNode) {  // untouched vertex carries over
        next_node[t] = node_of[v];
        next_d[t] = d_of[v];
        next_internal[t] = internal_of[v];
      }
    }

    if (metrics) {
      if (first) metrics->first_merge_lambda = level_min;
      metrics->levels += 1;
      metrics->merges += groups.size();
      metrics->vertex_ratio_per_level.push_back(double(cur.vertex_count()) /
                                                double(next.graph.vertex_count()));
      metrics->edge_ratio_per_level.push_back(
          next.graph.edge_count() ? double(cur.edge_count()) / double(next.graph.edge_count())
                                  : std::numeric_limits<double>::quiet_NaN());
    }
    first = false;

    cur = std::move(next.graph);
    node_of = std::move(next_node);
    d_of = std::move(next_d);
    internal_of = std::move(next_internal);
  }
  h.root = h.node_count() - 1;
  return h;
}

struct BuildResult {
  Hierarchy hierarchy;
  BuildMetrics metrics;
};

// Full pipeline: adjacency graph from the base partition, heuristic build,
// scale assignment, persistence cleaning.
inline BuildResult build(const RasterImage& img, const LabelMap& base, const BuilderConfig& cfg) {
  require_same_dims(img, base);
  if (!is_valid_partition(base)) fail(errc::invalid_label_map, "base partition is not valid");
  auto t0 = std::chrono::steady_clock::now();

  Rag rag = build_rag(img, base);
  BuildResult r;
  Hierarchy raw;
  if (cfg.method == heuristic::mm || cfg.method == heuristic::mm1)
    raw = build_parallel(rag, img.width, img.height, cfg, &r.metrics);
  else
    raw = build_sequential(rag, img.width, img.height, cfg, &r.metrics);
  assign_scales(raw);
  r.hierarchy = clean(raw);

  auto t1 = std::chrono::steady_clock::now();
  r.metrics.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return r;
}

}  // namespace scaleset
