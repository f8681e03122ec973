#include "unilp/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <string>

#include "unilp/errors.hpp"
#include "unilp/rng.hpp"

namespace unilp {

Graph Graph::from_edges(std::size_t n, std::span<const NodePair> edges,
                        std::size_t* self_loops_dropped) {
  std::vector<NodePair> canon;
  canon.reserve(edges.size());
  std::size_t loops = 0;
  for (const auto& e : edges) {
    if (e.u >= n || e.v >= n) {
      throw DataError("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                      ") references a node outside [0, " + std::to_string(n) + ")");
    }
    if (e.u == e.v) {
      ++loops;
      continue;
    }
    canon.push_back(e.canonical());
  }
  std::sort(canon.begin(), canon.end());
  canon.erase(std::unique(canon.begin(), canon.end()), canon.end());
  if (self_loops_dropped != nullptr) *self_loops_dropped = loops;

  Graph g;
  g.edge_count_ = canon.size();
  g.offsets_.assign(n + 1, 0);
  for (const auto& e : canon) {
    ++g.offsets_[e.u + 1];
    ++g.offsets_[e.v + 1];
  }
  for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] += g.offsets_[i];
  g.adjacency_.resize(2 * canon.size());
  std::vector<std::size_t> fill(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& e : canon) {
    g.adjacency_[fill[e.u]++] = e.v;
    g.adjacency_[fill[e.v]++] = e.u;
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i]),
              g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i + 1]));
  }
  return g;
}

std::size_t Graph::max_degree() const {
  std::size_t best = 0;
  for (std::size_t u = 0; u < node_count(); ++u) best = std::max(best, degree(static_cast<NodeId>(u)));
  return best;
}

bool Graph::has_edge(NodeId u, NodeId v) const {
  if (u >= node_count() || v >= node_count()) return false;
  if (degree(u) > degree(v)) std::swap(u, v);
  auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::vector<NodePair> Graph::edges() const {
  std::vector<NodePair> out;
  out.reserve(edge_count_);
  for (NodeId u = 0; u < node_count(); ++u) {
    for (NodeId v : neighbors(u)) {
      if (u < v) out.push_back({u, v});
    }
  }
  return out;
}

Graph Graph::without_edges(std::span<const NodePair> removed) const {
  PairSet drop(removed);
  std::vector<NodePair> keep;
  keep.reserve(edge_count_);
  for (const auto& e : edges()) {
    if (!drop.contains(e)) keep.push_back(e);
  }
  return from_edges(node_count(), keep);
}

std::size_t PairSet::count_nonedges_of(const Graph& g) const {
  std::size_t count = 0;
  for (std::uint64_t k : keys_) {
    const auto u = static_cast<NodeId>(k >> 32);
    const auto v = static_cast<NodeId>(k & 0xffffffffULL);
    if (u != v && v < g.node_count() && !g.has_edge(u, v)) ++count;
  }
  return count;
}

bool Graph::check_invariants() const {
  std::size_t degree_sum = 0;
  for (NodeId u = 0; u < node_count(); ++u) {
    auto nb = neighbors(u);
    degree_sum += nb.size();
    for (std::size_t i = 0; i < nb.size(); ++i) {
      if (nb[i] == u || nb[i] >= node_count()) return false;
      if (i > 0 && nb[i - 1] >= nb[i]) return false;
      auto back = neighbors(nb[i]);
      if (!std::binary_search(back.begin(), back.end(), u)) return false;
    }
  }
  return degree_sum == 2 * edge_count_;
}

LoadedGraph parse_edge_list(std::istream& in) {
  std::vector<std::pair<std::int64_t, std::int64_t>> raw;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw DataError("edge list line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::int64_t ids[2];
    std::size_t found = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p == end) break;
      if (found == 2) fail("expected exactly two node ids");
      auto [next, ec] = std::from_chars(p, end, ids[found]);
      if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t' && *next != '\r')) {
        fail("node id is not an integer");
      }
      if (ids[found] < 0) fail("node id is negative");
      ++found;
      p = next;
    }
    if (found == 0) continue;
    if (found != 2) fail("expected exactly two node ids");
    raw.emplace_back(ids[0], ids[1]);
  }
  if (raw.empty()) throw DataError("edge list is empty");

  LoadedGraph out;
  std::map<std::int64_t, NodeId> dense;
  for (const auto& [a, b] : raw) {
    dense.emplace(a, 0);
    dense.emplace(b, 0);
  }
  NodeId next_id = 0;
  for (auto& [orig, id] : dense) {
    id = next_id++;
    out.id_map.push_back(orig);
  }
  std::vector<NodePair> edges;
  edges.reserve(raw.size());
  for (const auto& [a, b] : raw) edges.push_back({dense[a], dense[b]});
  out.graph = Graph::from_edges(dense.size(), edges, &out.self_loops_dropped);
  return out;
}

LoadedGraph load_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list " + path.string());
  return parse_edge_list(in);
}

void write_edge_list(const Graph& g, std::ostream& out) {
  out << "# nodes " << g.node_count() << " edges " << g.edge_count() << '\n';
  for (const auto& e : g.edges()) out << e.u << ' ' << e.v << '\n';
}

Graph generate_lattice(const LatticeSpec& spec) {
  if (spec.rows < 3 || spec.cols < 3) throw ConfigError("lattice dimensions must be at least 3x3");
  const std::size_t rows = spec.rows;
  const std::size_t cols = spec.cols;
  auto id = [cols](std::size_t r, std::size_t c) { return static_cast<NodeId>(r * cols + c); };
  std::vector<NodePair> edges;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const bool right = spec.torus || c + 1 < cols;
      const bool down = spec.torus || r + 1 < rows;
      if (right) edges.push_back({id(r, c), id(r, (c + 1) % cols)});
      if (down) edges.push_back({id(r, c), id((r + 1) % rows, c)});
      if (spec.kind == LatticeKind::Triangular && right && down) {
        edges.push_back({id(r, c), id((r + 1) % rows, (c + 1) % cols)});
      }
    }
  }
  return Graph::from_edges(rows * cols, edges);
}

Graph generate_sbm(const SbmSpec& spec) {
  if (spec.block_sizes.empty()) throw ConfigError("SBM needs at least one block");
  for (auto b : spec.block_sizes) {
    if (b == 0) throw ConfigError("SBM block sizes must be positive");
  }
  if (!(0.0 <= spec.p_out && spec.p_out <= spec.p_in && spec.p_in <= 1.0)) {
    throw ConfigError("SBM probabilities must satisfy 0 <= p_out <= p_in <= 1");
  }
  std::vector<std::size_t> block;
  for (std::size_t b = 0; b < spec.block_sizes.size(); ++b) block.insert(block.end(), spec.block_sizes[b], b);
  const std::size_t n = block.size();
  Rng rng(derive_seed(spec.seed, "sbm"));
  std::vector<NodePair> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = block[i] == block[j] ? spec.p_in : spec.p_out;
      if (rng.bernoulli(p)) edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
    }
  }
  return Graph::from_edges(n, edges);
}

namespace {

bool is_removed(const std::optional<NodePair>& removed, NodeId a, NodeId b) {
  return removed && ((removed->u == a && removed->v == b) || (removed->u == b && removed->v == a));
}

}  // namespace

std::vector<Distance> bfs_distances(const Graph& g, NodeId source, std::optional<NodePair> removed,
                                    Distance max_depth) {
  std::vector<Distance> dist(g.node_count(), kUnreachable);
  std::queue<NodeId> frontier;
  dist[source] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    NodeId x = frontier.front();
    frontier.pop();
    if (dist[x] >= max_depth) continue;
    for (NodeId y : g.neighbors(x)) {
      if (dist[y] != kUnreachable || is_removed(removed, x, y)) continue;
      dist[y] = dist[x] + 1;
      frontier.push(y);
    }
  }
  return dist;
}

Distance shortest_path(const Graph& g, NodeId u, NodeId v, std::optional<NodePair> removed) {
  if (u == v) return 0;
  return bfs_distances(g, u, removed)[v];
}

namespace {

struct PathSearch {
  const Graph& g;
  NodeId target;
  std::size_t edge_len;
  std::optional<NodePair> removed;
  bool stop_at_first;
  std::vector<char> on_path;
  std::uint64_t found = 0;

  // Returns true once the caller may stop.
  bool walk(NodeId x, std::size_t depth) {
    if (depth == edge_len) {
      if (x == target) ++found;
      return stop_at_first && found > 0;
    }
    for (NodeId y : g.neighbors(x)) {
      if (on_path[y] || is_removed(removed, x, y)) continue;
      // the target may only close the path
      if (y == target && depth + 1 != edge_len) continue;
      on_path[y] = 1;
      const bool done = walk(y, depth + 1);
      on_path[y] = 0;
      if (done) return true;
    }
    return false;
  }
};

std::uint64_t enumerate_paths(const Graph& g, NodeId u, NodeId v, std::size_t edge_len,
                              std::optional<NodePair> removed, bool stop_at_first) {
  if (u == v) throw ConfigError("simple path endpoints must differ");
  if (edge_len == 0 || edge_len > kMaxPathEdges) {
    throw ConfigError("path length must be in [1, " + std::to_string(kMaxPathEdges) + "]");
  }
  PathSearch search{g, v, edge_len, removed, stop_at_first, std::vector<char>(g.node_count(), 0)};
  search.on_path[u] = 1;
  search.walk(u, 0);
  return search.found;
}

}  // namespace

std::uint64_t count_simple_paths(const Graph& g, NodeId u, NodeId v, std::size_t edge_len,
                                 std::optional<NodePair> removed) {
  return enumerate_paths(g, u, v, edge_len, removed, false);
}

bool has_simple_path(const Graph& g, NodeId u, NodeId v, std::size_t edge_len,
                     std::optional<NodePair> removed) {
  return enumerate_paths(g, u, v, edge_len, removed, true) > 0;
}

bool is_bipartite(const Graph& g) {
  std::vector<int> color(g.node_count(), -1);
  for (NodeId s = 0; s < g.node_count(); ++s) {
    if (color[s] != -1) continue;
    color[s] = 0;
    std::queue<NodeId> q;
    q.push(s);
    while (!q.empty()) {
      NodeId x = q.front();
      q.pop();
      for (NodeId y : g.neighbors(x)) {
        if (color[y] == -1) {
          color[y] = 1 - color[x];
          q.push(y);
        } else if (color[y] == color[x]) {
          return false;
        }
      }
    }
  }
  return true;
}

}  // namespace unilp
