#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

namespace unilp {

using NodeId = std::uint32_t;
using Distance = std::uint32_t;

/// Sentinel hop distance for nodes that cannot be reached.
inline constexpr Distance kUnreachable = std::numeric_limits<Distance>::max();

/// Unordered node pair. Stored canonically (u < v) wherever it is used as a
/// set member; `canonical()` normalizes.
struct NodePair {
  NodeId u = 0;
  NodeId v = 0;

  constexpr NodePair canonical() const { return u < v ? NodePair{u, v} : NodePair{v, u}; }
  constexpr std::uint64_t key() const {
    const NodePair c = canonical();
    return (static_cast<std::uint64_t>(c.u) << 32) | c.v;
  }
  friend constexpr bool operator==(const NodePair&, const NodePair&) = default;
  friend constexpr auto operator<=>(const NodePair&, const NodePair&) = default;
};

class Graph;

/// Membership set for unordered pairs. Never iterated, so hash order cannot
/// leak into results.
class PairSet {
 public:
  PairSet() = default;
  explicit PairSet(std::span<const NodePair> pairs) {
    for (const auto& p : pairs) insert(p);
  }
  bool insert(NodePair p) { return keys_.insert(p.key()).second; }
  bool contains(NodePair p) const { return keys_.contains(p.key()); }
  std::size_t size() const { return keys_.size(); }
  /// Members that are proper pairs of `g` (distinct in-range nodes) but not
  /// edges of it.
  std::size_t count_nonedges_of(const Graph& g) const;

 private:
  std::unordered_set<std::uint64_t> keys_;
};

/// Immutable undirected simple graph in compressed row layout.
///
/// Neighbor lists are sorted ascending, contain no self-loops and no
/// duplicates, and every edge is stored in both directions.
class Graph {
 public:
  Graph() = default;

  /// Builds a graph on `n` nodes. Duplicate edges collapse; self-loops are
  /// dropped and counted into `self_loops_dropped` when given. Throws
  /// DataError for ids >= n.
  static Graph from_edges(std::size_t n, std::span<const NodePair> edges,
                          std::size_t* self_loops_dropped = nullptr);

  std::size_t node_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t edge_count() const { return edge_count_; }

  std::span<const NodeId> neighbors(NodeId u) const {
    return {adjacency_.data() + offsets_[u], adjacency_.data() + offsets_[u + 1]};
  }
  std::size_t degree(NodeId u) const { return offsets_[u + 1] - offsets_[u]; }
  std::size_t max_degree() const;

  bool has_edge(NodeId u, NodeId v) const;
  bool has_edge(NodePair p) const { return has_edge(p.u, p.v); }

  /// All edges as canonical pairs, sorted.
  std::vector<NodePair> edges() const;

  /// Copy of this graph without the listed edges.
  Graph without_edges(std::span<const NodePair> removed) const;

  /// Symmetry, sortedness, no self-loops, degree sum == 2|E|.
  bool check_invariants() const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> adjacency_;
  std::size_t edge_count_ = 0;
};

/// Result of reading an edge-list file: the dense graph, the original id of
/// each dense node and the number of self-loop lines discarded.
struct LoadedGraph {
  Graph graph;
  std::vector<std::int64_t> id_map;
  std::size_t self_loops_dropped = 0;
};

/// Parses "u v" lines, `#` comments and blank lines. Arbitrary non-negative
/// ids are mapped to dense 0-based ids in ascending id order. Throws
/// DataError naming the line for malformed input and for empty input.
LoadedGraph parse_edge_list(std::istream& in);
LoadedGraph load_edge_list(const std::filesystem::path& path);
void write_edge_list(const Graph& g, std::ostream& out);

enum class LatticeKind { Grid, Triangular };

struct LatticeSpec {
  LatticeKind kind = LatticeKind::Grid;
  std::size_t rows = 3;
  std::size_t cols = 3;
  bool torus = false;
};

/// Node (r, c) has id r * cols + c. Grid links four nearest neighbors;
/// triangular additionally links (r, c)-(r+1, c+1) in every cell.
Graph generate_lattice(const LatticeSpec& spec);

struct SbmSpec {
  std::vector<std::size_t> block_sizes;
  double p_in = 0.0;
  double p_out = 0.0;
  std::uint64_t seed = 0;
};

/// Stochastic block model with contiguous blocks. Pairs are visited in
/// lexicographic order, one Bernoulli draw each.
Graph generate_sbm(const SbmSpec& spec);

/// BFS hop distances from `source`, optionally ignoring one edge and
/// stopping at `max_depth`. Unvisited nodes get kUnreachable.
std::vector<Distance> bfs_distances(const Graph& g, NodeId source,
                                    std::optional<NodePair> removed = std::nullopt,
                                    Distance max_depth = kUnreachable);

Distance shortest_path(const Graph& g, NodeId u, NodeId v,
                       std::optional<NodePair> removed = std::nullopt);

inline constexpr std::size_t kMaxPathEdges = 6;

/// Number of simple paths from u to v with exactly `edge_len` edges
/// (exhaustive DFS). edge_len must be in [1, kMaxPathEdges].
std::uint64_t count_simple_paths(const Graph& g, NodeId u, NodeId v, std::size_t edge_len,
                                 std::optional<NodePair> removed = std::nullopt);

/// Same enumeration as count_simple_paths, stopping at the first path.
bool has_simple_path(const Graph& g, NodeId u, NodeId v, std::size_t edge_len,
                     std::optional<NodePair> removed = std::nullopt);

/// Two-colorability by BFS.
bool is_bipartite(const Graph& g);

}  // namespace unilp
