#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "unilp/graph.hpp"

namespace unilp {

/// Positional label of a node relative to a target pair: (drnl, 0) for nodes
/// reachable from both targets, (0, d) for nodes reachable from only one.
struct DrnlTuple {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  friend constexpr bool operator==(const DrnlTuple&, const DrnlTuple&) = default;
  friend constexpr auto operator<=>(const DrnlTuple&, const DrnlTuple&) = default;
};

/// Ego-subgraph of a node pair in local indices. Local 0 is the first target,
/// local 1 the second, the rest follow in ascending original id.
struct LabeledSubgraph {
  NodePair target;
  std::uint32_t radius = 1;
  std::vector<NodeId> nodes;
  // local CSR adjacency, neighbor lists ascending
  std::vector<std::uint32_t> offsets;
  std::vector<std::uint32_t> neighbors;
  // filled by drnl_plus; empty for an unlabeled extraction
  std::vector<Distance> dist_u;
  std::vector<Distance> dist_v;
  std::vector<DrnlTuple> labels;

  std::size_t size() const { return nodes.size(); }
  std::size_t edge_count() const { return neighbors.size() / 2; }
  std::uint32_t degree(std::uint32_t i) const { return offsets[i + 1] - offsets[i]; }
  bool labeled() const { return labels.size() == nodes.size(); }
};

struct ExtractOptions {
  std::uint32_t radius = 1;
  /// Hide the target pair's own edge (when present) from extraction and
  /// labeling.
  bool remove_target = true;
  /// When set, each BFS frontier keeps at most this many nodes, chosen
  /// uniformly with a seed derived from (seed, pair).
  std::optional<std::size_t> max_nodes_per_hop;
  std::uint64_t seed = 0;
};

/// Nodes within `radius` hops of either target, with induced edges. The
/// returned subgraph carries no labels yet.
LabeledSubgraph extract_ego_subgraph(const Graph& g, NodePair pair, const ExtractOptions& options = {});

/// Double-radius node label: 1 + min(du, dv) + (d/2) * ((d/2) + (d%2) - 1)
/// with d = du + dv, integer division. Both distances must be finite.
std::uint32_t drnl(Distance du, Distance dv);

/// Computes distances to both targets inside `sub` and assigns per-node
/// tuples: (0, du) when v is unreachable, (0, dv) when u is unreachable,
/// (drnl, 0) otherwise. Both targets are fixed to (1, 0). Returns the labels
/// it stored in `sub`.
const std::vector<DrnlTuple>& drnl_plus(LabeledSubgraph& sub);

/// Extraction followed by labeling.
LabeledSubgraph extract_labeled(const Graph& g, NodePair pair, const ExtractOptions& options = {});

/// Maps label tuples to embedding rows: (a, 0) -> min(a, drnl_cap),
/// (0, b) -> drnl_cap + 1 + min(b, dist_cap).
struct LabelVocab {
  std::uint32_t drnl_cap = 100;
  std::uint32_t dist_cap = 10;

  std::size_t size() const { return static_cast<std::size_t>(drnl_cap) + dist_cap + 2; }
  std::uint32_t index(DrnlTuple t) const;
  std::vector<std::uint32_t> indices(const LabeledSubgraph& sub) const;
};

}  // namespace unilp
