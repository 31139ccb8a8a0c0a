#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "error.hpp"
#include "plf.hpp"
#include "raster.hpp"
#include "regions.hpp"

namespace scaleset {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xFFFFFFFFu;

// d is the data term frozen when the node was created, c the boundary term
// (perimeter). lambda_plus is the scale of appearance, set by assign_scales.
struct HierarchyNode {
  NodeId parent = kNoNode;
  std::vector<NodeId> children;  // ascending; empty for base nodes
  RegionStats stats;
  double d = 0.0;
  double c = 0.0;
  double lambda_plus = 0.0;
};

// Merge tree over a base partition. Node ids are creation-ordered, so every
// parent id exceeds its children's ids. base_owner maps each base region to
// the node that covers it directly; in a freshly built tree that is leaf r,
// after cleaning it may be an inner survivor that absorbed the leaf.
struct Hierarchy {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 1;
  std::vector<HierarchyNode> nodes;
  std::vector<NodeId> base_owner;
  NodeId root = kNoNode;

  std::uint32_t node_count() const { return std::uint32_t(nodes.size()); }
  std::uint32_t base_region_count() const { return std::uint32_t(base_owner.size()); }
  bool is_leaf(NodeId v) const { return nodes[v].children.empty(); }
};

inline void validate_hierarchy(const Hierarchy& h) {
  if (h.nodes.empty()) fail(errc::invalid_hierarchy, "hierarchy has no nodes");
  if (h.root != h.node_count() - 1)
    fail(errc::invalid_hierarchy, "root must be the newest node");
  if (h.base_owner.empty()) fail(errc::invalid_hierarchy, "no base regions");
  if (h.width == 0 || h.height == 0) fail(errc::invalid_hierarchy, "empty image domain");
  for (NodeId v = 0; v < h.node_count(); ++v) {
    const HierarchyNode& n = h.nodes[v];
    if (v == h.root) {
      if (n.parent != kNoNode) fail(errc::invalid_hierarchy, "root cannot have a parent");
    } else {
      if (n.parent == kNoNode || n.parent >= h.node_count() || n.parent <= v)
        fail(errc::invalid_hierarchy, "node parent must be a later node");
    }
    for (NodeId c : n.children)
      if (c >= v || h.nodes[c].parent != v)
        fail(errc::invalid_hierarchy, "child link does not match parent link");
  }
  for (NodeId owner : h.base_owner)
    if (owner >= h.node_count()) fail(errc::invalid_hierarchy, "base owner out of range");
}

namespace detail {

// Bottom-up envelope propagation. Each node's envelope is the cheapest
// energy its subtree can realize as a function of scale; an inner node
// undercuts the sum of its children's envelopes with its own line from its
// scale of appearance onward. Child envelopes are released as soon as the
// parent consumed them.
inline PlConcave hierarchy_dp(const Hierarchy& h, std::vector<double>* scales) {
  validate_hierarchy(h);
  std::vector<PlConcave> env(h.node_count());
  for (NodeId v = 0; v < h.node_count(); ++v) {
    const HierarchyNode& n = h.nodes[v];
    if (n.children.empty()) {
      env[v] = PlConcave::line(n.d, n.c);
      if (scales) (*scales)[v] = 0.0;
      continue;
    }
    double child_c = 0.0;
    for (NodeId c : n.children) child_c += h.nodes[c].c;
    if (!(n.c < child_c))
      fail(errc::subadditivity_violation,
           "node boundary term must drop strictly below the sum of its children's");
    PlConcave f = std::move(env[n.children.front()]);
    for (std::size_t i = 1; i < n.children.size(); ++i) f = sum(f, env[n.children[i]]);
    for (NodeId c : n.children) env[c] = PlConcave();
    MinWithLineResult r = min_with_line(f, n.d, n.c);
    env[v] = std::move(r.envelope);
    if (scales) (*scales)[v] = r.crossing;
  }
  return std::move(env[h.root]);
}

}  // namespace detail

// Computes every node's scale of appearance: the scale from which cutting
// at the node is at least as cheap as any cut through its subtree. Base
// nodes appear at 0.
inline void assign_scales(Hierarchy& h) {
  std::vector<double> scales(h.node_count(), 0.0);
  detail::hierarchy_dp(h, &scales);
  for (NodeId v = 0; v < h.node_count(); ++v) h.nodes[v].lambda_plus = scales[v];
}

// Cheapest cut energy as a function of scale (the root's envelope).
inline PlConcave energy_curve(const Hierarchy& h) { return detail::hierarchy_dp(h, nullptr); }

// Scale from which the whole image is the optimal cut.
inline double lambda_max(const Hierarchy& h) { return h.nodes[h.root].lambda_plus; }

// Keeps exactly the nodes that appear in some optimal cut: a node survives
// iff its scale is strictly below every proper ancestor's scale. Children
// of removed nodes reattach to the nearest surviving ancestor, and base
// regions owned by removed nodes move the same way. Equivalent to removing
// nodes with scale >= parent's scale until none remain (removal only ever
// lowers the scale a descendant is compared against, so the fixpoint is
// unique and this direct form reaches it in one pass).
inline Hierarchy clean(const Hierarchy& h) {
  validate_hierarchy(h);
  std::uint32_t n = h.node_count();
  std::vector<char> survives(n, 0);
  std::vector<NodeId> nearest(n, kNoNode);  // nearest surviving ancestor-or-self

  // Parents have larger ids, so descending id order is top-down.
  std::vector<double> min_anc(n, std::numeric_limits<double>::infinity());
  for (NodeId v = n; v-- > 0;) {
    const HierarchyNode& node = h.nodes[v];
    if (v != h.root) {
      NodeId p = node.parent;
      min_anc[v] = std::min(min_anc[p], h.nodes[p].lambda_plus);
    }
    bool keep = (v == h.root) || (node.lambda_plus < min_anc[v]);
    survives[v] = keep;
    nearest[v] = keep ? v : nearest[node.parent];
  }

  std::vector<NodeId> new_id(n, kNoNode);
  Hierarchy out;
  out.width = h.width;
  out.height = h.height;
  out.channels = h.channels;
  for (NodeId v = 0; v < n; ++v) {
    if (!survives[v]) continue;
    new_id[v] = NodeId(out.nodes.size());
    HierarchyNode copy;
    copy.stats = h.nodes[v].stats;
    copy.d = h.nodes[v].d;
    copy.c = h.nodes[v].c;
    copy.lambda_plus = h.nodes[v].lambda_plus;
    out.nodes.push_back(std::move(copy));
  }
  for (NodeId v = 0; v < n; ++v) {
    if (!survives[v] || v == h.root) continue;
    NodeId p = new_id[nearest[h.nodes[v].parent]];
    out.nodes[new_id[v]].parent = p;
    out.nodes[p].children.push_back(new_id[v]);
  }
  out.root = new_id[h.root];
  out.base_owner.resize(h.base_owner.size());
  for (std::size_t r = 0; r < h.base_owner.size(); ++r)
    out.base_owner[r] = new_id[nearest[h.base_owner[r]]];
  return out;
}

// Coarsest nodes whose scale of appearance has been reached; on a cleaned
// hierarchy this is the cheapest cut at that scale. Childless nodes are
// emitted unconditionally, whatever their scale.
inline std::vector<NodeId> optimal_cut(const Hierarchy& h, double lambda) {
  if (lambda < 0.0) fail(errc::invalid_config, "scale must be nonnegative");
  std::vector<NodeId> cut;
  std::vector<NodeId> open{h.root};
  while (!open.empty()) {
    NodeId v = open.back();
    open.pop_back();
    const HierarchyNode& n = h.nodes[v];
    if (n.children.empty() || n.lambda_plus <= lambda) {
      cut.push_back(v);
    } else {
      for (NodeId c : n.children) open.push_back(c);
    }
  }
  std::sort(cut.begin(), cut.end());
  return cut;
}

inline double cut_energy(const Hierarchy& h, const std::vector<NodeId>& cut, double lambda) {
  double e = 0.0;
  for (NodeId v : cut) e += h.nodes[v].d + lambda * h.nodes[v].c;
  return e;
}

// Paints each base region with the index of the cut node covering it. base
// must be the partition the hierarchy was built on.
inline LabelMap cut_to_label_map(const Hierarchy& h, const std::vector<NodeId>& cut,
                                 const LabelMap& base) {
  if (base.width != h.width || base.height != h.height ||
      base.region_count != h.base_region_count())
    fail(errc::dimension_mismatch, "base partition does not match the hierarchy");
  std::vector<char> in_cut(h.node_count(), 0);
  std::vector<std::uint32_t> cut_index(h.node_count(), 0);
  for (std::size_t i = 0; i < cut.size(); ++i) {
    if (cut[i] >= h.node_count()) fail(errc::invalid_subset, "cut node out of range");
    in_cut[cut[i]] = 1;
    cut_index[cut[i]] = std::uint32_t(i);
  }
  std::vector<std::uint32_t> region_label(h.base_region_count());
  for (std::uint32_t r = 0; r < h.base_region_count(); ++r) {
    NodeId v = h.base_owner[r];
    while (v != kNoNode && !in_cut[v]) v = h.nodes[v].parent;
    if (v == kNoNode) fail(errc::invalid_subset, "cut does not cover every base region");
    region_label[r] = cut_index[v];
  }
  LabelMap out;
  out.width = base.width;
  out.height = base.height;
  out.region_count = std::uint32_t(cut.size());
  out.labels.resize(base.labels.size());
  for (std::size_t p = 0; p < base.labels.size(); ++p)
    out.labels[p] = region_label[base.labels[p]];
  return out;
}

namespace detail {

inline void put_f64_le(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.put(char((bits >> (8 * i)) & 0xFF));
}

inline bool get_f64_le(std::istream& in, double& v) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
  std::memcpy(&v, &bits, 8);
  return true;
}

}  // namespace detail

// Container layout, all little-endian after the magic:
//   "SSH1"
//   u32 width, height, channels, node_count, base_region_count, root_id
//   node_count x { u32 parent; f64 area, sum[3], sumsq, perimeter, d, c, scale }
//   base_region_count x u32 owner
inline void save_hierarchy(const Hierarchy& h, const std::string& path) {
  validate_hierarchy(h);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_failure, "cannot open " + path + " for writing");
  out.write("SSH1", 4);
  detail::put_u32_le(out, h.width);
  detail::put_u32_le(out, h.height);
  detail::put_u32_le(out, h.channels);
  detail::put_u32_le(out, h.node_count());
  detail::put_u32_le(out, h.base_region_count());
  detail::put_u32_le(out, h.root);
  for (const HierarchyNode& n : h.nodes) {
    detail::put_u32_le(out, n.parent);
    detail::put_f64_le(out, n.stats.area);
    for (int c = 0; c < 3; ++c) detail::put_f64_le(out, n.stats.sum[c]);
    detail::put_f64_le(out, n.stats.sumsq);
    detail::put_f64_le(out, n.stats.perimeter);
    detail::put_f64_le(out, n.d);
    detail::put_f64_le(out, n.c);
    detail::put_f64_le(out, n.lambda_plus);
  }
  for (NodeId owner : h.base_owner) detail::put_u32_le(out, owner);
  if (!out) fail(errc::io_failure, "write failed for " + path);
}

inline Hierarchy load_hierarchy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_failure, "cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4)) fail(errc::corrupt_payload, path + ": too short for a hierarchy file");
  if (std::memcmp(magic, "SSH", 3) != 0)
    fail(errc::unsupported_format, path + ": not a hierarchy container");
  if (magic[3] != '1')
    fail(errc::version_mismatch, path + ": unsupported container version");

  Hierarchy h;
  std::uint32_t node_count = 0, base_count = 0;
  bool ok = detail::get_u32_le(in, h.width) && detail::get_u32_le(in, h.height) &&
            detail::get_u32_le(in, h.channels) && detail::get_u32_le(in, node_count) &&
            detail::get_u32_le(in, base_count) && detail::get_u32_le(in, h.root);
  if (!ok) fail(errc::corrupt_payload, path + ": truncated header");
  if (node_count == 0 || base_count == 0)
    fail(errc::corrupt_payload, path + ": empty hierarchy");

  h.nodes.resize(node_count);
  for (std::uint32_t v = 0; v < node_count; ++v) {
    HierarchyNode& n = h.nodes[v];
    double fields[9];
    if (!detail::get_u32_le(in, n.parent))
      fail(errc::corrupt_payload, path + ": truncated node table");
    for (double& f : fields)
      if (!detail::get_f64_le(in, f))
        fail(errc::corrupt_payload, path + ": truncated node table");
    n.stats.area = fields[0];
    for (int c = 0; c < 3; ++c) n.stats.sum[c] = fields[1 + c];
    n.stats.sumsq = fields[4];
    n.stats.perimeter = fields[5];
    n.d = fields[6];
    n.c = fields[7];
    n.lambda_plus = fields[8];
    for (double f : fields)
      if (!std::isfinite(f)) fail(errc::corrupt_payload, path + ": non-finite node field");
  }
  h.base_owner.resize(base_count);
  for (NodeId& owner : h.base_owner)
    if (!detail::get_u32_le(in, owner))
      fail(errc::corrupt_payload, path + ": truncated owner table");

  for (std::uint32_t v = 0; v < node_count; ++v) {
    NodeId p = h.nodes[v].parent;
    if (v == h.root) continue;
    if (p == kNoNode || p >= node_count || p <= v) continue;  // validate below rebuilds context
    h.nodes[p].children.push_back(v);
  }
  try {
    validate_hierarchy(h);
  } catch (const error& e) {
    fail(errc::corrupt_payload, path + ": " + e.what());
  }
  return h;
}

}  // namespace scaleset
