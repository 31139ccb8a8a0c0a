#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "error.hpp"
#include "raster.hpp"

namespace scaleset {

// Sufficient statistics of a pixel region. perimeter counts unit edgels,
// including the part lying on the image border. sum has one slot per
// channel; unused slots stay zero so squared_error works for any channel
// count up to 3.
struct RegionStats {
  double area = 0.0;
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  double sumsq = 0.0;
  double perimeter = 0.0;
};

// Sum over pixels of squared distance to the region mean. Never negative up
// to rounding; clamped so callers can rely on that.
inline double squared_error(const RegionStats& s) {
  if (s.area <= 0.0) return 0.0;
  double m = 0.0;
  for (double c : s.sum) m += c * c;
  double se = s.sumsq - m / s.area;
  return se > 0.0 ? se : 0.0;
}

// shared_len is the length of the common boundary; it vanishes from the
// merged perimeter twice, once per side.
inline RegionStats merge_stats(const RegionStats& a, const RegionStats& b, double shared_len) {
  if (shared_len <= 0.0) fail(errc::non_adjacent_merge, "regions share no boundary");
  RegionStats r;
  r.area = a.area + b.area;
  for (int c = 0; c < 3; ++c) r.sum[c] = a.sum[c] + b.sum[c];
  r.sumsq = a.sumsq + b.sumsq;
  r.perimeter = a.perimeter + b.perimeter - 2.0 * shared_len;
  return r;
}

inline std::vector<RegionStats> compute_stats(const RasterImage& img, const LabelMap& m) {
  require_same_dims(img, m);
  if (m.region_count == 0) fail(errc::empty_label_map, "label map has no regions");
  std::vector<RegionStats> stats(m.region_count);
  for (std::uint32_t y = 0; y < m.height; ++y) {
    for (std::uint32_t x = 0; x < m.width; ++x) {
      std::uint32_t id = m.at(x, y);
      RegionStats& s = stats[id];
      s.area += 1.0;
      for (std::uint32_t c = 0; c < img.channels; ++c) {
        double v = img.at(x, y, c);
        s.sum[c] += v;
        s.sumsq += v * v;
      }
      if (x == 0 || m.at(x - 1, y) != id) s.perimeter += 1.0;
      if (x + 1 >= m.width || m.at(x + 1, y) != id) s.perimeter += 1.0;
      if (y == 0 || m.at(x, y - 1) != id) s.perimeter += 1.0;
      if (y + 1 >= m.height || m.at(x, y + 1) != id) s.perimeter += 1.0;
    }
  }
  return stats;
}

// One adjacency record. grad_sum accumulates the per-edgel Euclidean
// color difference, so grad_sum / shared_len is the mean boundary gradient.
struct NeighborLink {
  std::uint32_t id;
  double shared_len;
  double grad_sum;
};

inline double mean_gradient(const NeighborLink& l) { return l.grad_sum / l.shared_len; }

struct EdgeRef {
  std::uint32_t u, v;  // u < v
  double shared_len;
  double grad_sum;
};

// Region adjacency graph over a partition. Immutable once built; coarser
// graphs come from contract(). Adjacency lists are sorted by neighbor id.
class Rag {
 public:
  Rag() = default;
  Rag(std::vector<RegionStats> stats, std::vector<std::vector<NeighborLink>> adj,
      std::uint32_t channels)
      : stats_(std::move(stats)), adj_(std::move(adj)), channels_(channels) {
    edge_count_ = 0;
    for (std::uint32_t v = 0; v < vertex_count(); ++v)
      for (const NeighborLink& l : adj_[v])
        if (l.id > v) ++edge_count_;
  }

  std::uint32_t vertex_count() const { return std::uint32_t(stats_.size()); }
  std::size_t edge_count() const { return edge_count_; }
  std::uint32_t channels() const { return channels_; }
  const RegionStats& stats(std::uint32_t v) const { return stats_[v]; }
  std::span<const NeighborLink> neighbors(std::uint32_t v) const {
    return {adj_[v].data(), adj_[v].size()};
  }

  // 0 when the vertices are not adjacent.
  double shared_length(std::uint32_t a, std::uint32_t b) const {
    for (const NeighborLink& l : adj_[a])
      if (l.id == b) return l.shared_len;
    return 0.0;
  }

  std::vector<EdgeRef> edges() const {
    std::vector<EdgeRef> out;
    out.reserve(edge_count_);
    for (std::uint32_t v = 0; v < vertex_count(); ++v)
      for (const NeighborLink& l : adj_[v])
        if (l.id > v) out.push_back({v, l.id, l.shared_len, l.grad_sum});
    return out;
  }

  struct Contraction;

  // Merges each listed group into one vertex; vertices in no group stay
  // singletons. Groups must be disjoint, and each must induce a connected
  // subgraph. New ids are ordered by the smallest old id in each group.
  Contraction contract(const std::vector<std::vector<std::uint32_t>>& groups) const;

 private:
  std::vector<RegionStats> stats_;
  std::vector<std::vector<NeighborLink>> adj_;
  std::uint32_t channels_ = 1;
  std::size_t edge_count_ = 0;
};

struct Rag::Contraction {
  Rag graph;
  std::vector<std::uint32_t> vertex_map;  // old id -> new id
};

inline Rag::Contraction Rag::contract(const std::vector<std::vector<std::uint32_t>>& groups) const {
  std::uint32_t n = vertex_count();
  const std::uint32_t kFree = 0xFFFFFFFFu;
  std::vector<std::uint32_t> group_of(n, kFree);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) fail(errc::invalid_subset, "empty contraction group");
    for (std::uint32_t v : groups[g]) {
      if (v >= n) fail(errc::invalid_subset, "contraction vertex out of range");
      if (group_of[v] != kFree) fail(errc::invalid_subset, "vertex listed twice in contraction");
      group_of[v] = std::uint32_t(g);
    }
  }
  for (const auto& g : groups) {
    if (g.size() < 2) continue;
    // BFS inside the group; every member must be reachable.
    std::vector<std::uint32_t> open{g[0]};
    std::vector<char> hit(g.size(), 0);
    std::map<std::uint32_t, std::size_t> index;
    for (std::size_t i = 0; i < g.size(); ++i) index[g[i]] = i;
    hit[0] = 1;
    std::size_t reached = 1;
    while (!open.empty()) {
      std::uint32_t v = open.back();
      open.pop_back();
      for (const NeighborLink& l : adj_[v]) {
        auto it = index.find(l.id);
        if (it == index.end() || hit[it->second]) continue;
        hit[it->second] = 1;
        ++reached;
        open.push_back(l.id);
      }
    }
    if (reached != g.size()) fail(errc::disconnected_group, "contraction group is not connected");
  }

  // Final partition of old vertices: explicit groups plus leftover singletons,
  // keyed by smallest member for deterministic new ids.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> order;  // (min old id, group idx or kFree+v)
  std::vector<std::vector<std::uint32_t>> parts;
  parts.reserve(groups.size() + n);
  for (const auto& g : groups) {
    std::vector<std::uint32_t> sorted = g;
    std::sort(sorted.begin(), sorted.end());
    parts.push_back(std::move(sorted));
  }
  for (std::uint32_t v = 0; v < n; ++v)
    if (group_of[v] == kFree) parts.push_back({v});
  std::sort(parts.begin(), parts.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });

  std::vector<std::uint32_t> vmap(n, 0);
  for (std::uint32_t p = 0; p < parts.size(); ++p)
    for (std::uint32_t v : parts[p]) vmap[v] = p;

  std::uint32_t nn = std::uint32_t(parts.size());
  std::vector<RegionStats> nstats(nn);
  for (std::uint32_t p = 0; p < nn; ++p) {
    RegionStats s;
    double internal = 0.0;
    for (std::uint32_t v : parts[p]) {
      const RegionStats& sv = stats_[v];
      s.area += sv.area;
      for (int c = 0; c < 3; ++c) s.sum[c] += sv.sum[c];
      s.sumsq += sv.sumsq;
      s.perimeter += sv.perimeter;
      for (const NeighborLink& l : adj_[v])
        if (vmap[l.id] == p) internal += l.shared_len;
    }
    s.perimeter -= internal;  // each internal edge seen from both sides
    nstats[p] = s;
  }

  // Fuse surviving edges; iterate old edges in (u, v) order so accumulation
  // order is reproducible.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<double, double>> fused;
  for (std::uint32_t v = 0; v < n; ++v) {
    for (const NeighborLink& l : adj_[v]) {
      if (l.id < v) continue;
      std::uint32_t a = vmap[v], b = vmap[l.id];
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      auto& acc = fused[{a, b}];
      acc.first += l.shared_len;
      acc.second += l.grad_sum;
    }
  }
  std::vector<std::vector<NeighborLink>> nadj(nn);
  for (const auto& [key, acc] : fused) {
    nadj[key.first].push_back({key.second, acc.first, acc.second});
    nadj[key.second].push_back({key.first, acc.first, acc.second});
  }
  for (auto& lst : nadj)
    std::sort(lst.begin(), lst.end(),
              [](const NeighborLink& a, const NeighborLink& b) { return a.id < b.id; });

  Contraction out{Rag(std::move(nstats), std::move(nadj), channels_), std::move(vmap)};
  return out;
}

// Builds the adjacency graph of a partition: one vertex per region, one
// edge per adjacent pair, weighted by boundary length and accumulated
// per-edgel color difference (Euclidean across channels).
inline Rag build_rag(const RasterImage& img, const LabelMap& m) {
  require_same_dims(img, m);
  std::vector<RegionStats> stats = compute_stats(img, m);

  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<double, double>> acc;
  auto touch = [&](std::size_t p, std::size_t q) {
    std::uint32_t a = m.labels[p], b = m.labels[q];
    if (a == b) return;
    double d2 = 0.0;
    for (std::uint32_t c = 0; c < img.channels; ++c) {
      double d = img.data[p * img.channels + c] - img.data[q * img.channels + c];
      d2 += d * d;
    }
    if (a > b) std::swap(a, b);
    auto& e = acc[{a, b}];
    e.first += 1.0;
    e.second += std::sqrt(d2);
  };
  for (std::uint32_t y = 0; y < m.height; ++y) {
    for (std::uint32_t x = 0; x < m.width; ++x) {
      std::size_t p = std::size_t(y) * m.width + x;
      if (x + 1 < m.width) touch(p, p + 1);
      if (y + 1 < m.height) touch(p, p + m.width);
    }
  }
  std::vector<std::vector<NeighborLink>> adj(m.region_count);
  for (const auto& [key, e] : acc) {
    adj[key.first].push_back({key.second, e.first, e.second});
    adj[key.second].push_back({key.first, e.first, e.second});
  }
  for (auto& lst : adj)
    std::sort(lst.begin(), lst.end(),
              [](const NeighborLink& a, const NeighborLink& b) { return a.id < b.id; });
  return Rag(std::move(stats), std::move(adj), img.channels);
}

}  // namespace scaleset
