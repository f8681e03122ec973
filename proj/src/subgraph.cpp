#include "unilp/subgraph.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>
#include <unordered_map>

#include "unilp/errors.hpp"
#include "unilp/rng.hpp"

namespace unilp {

namespace {

bool is_target_edge(NodePair target, NodeId a, NodeId b) {
  return (target.u == a && target.v == b) || (target.u == b && target.v == a);
}

// Nodes within `radius` hops of `source`, frontier-capped when requested.
void collect_ball(const Graph& g, NodeId source, NodePair target, bool skip_target,
                  const ExtractOptions& opt, Rng& rng, std::vector<char>& seen_global,
                  std::vector<NodeId>& members) {
  std::unordered_map<NodeId, char> seen;
  std::vector<NodeId> frontier{source};
  seen[source] = 1;
  for (std::uint32_t depth = 0; depth < opt.radius && !frontier.empty(); ++depth) {
    std::vector<NodeId> next;
    for (NodeId x : frontier) {
      for (NodeId y : g.neighbors(x)) {
        if (skip_target && is_target_edge(target, x, y)) continue;
        if (seen.emplace(y, 1).second) next.push_back(y);
      }
    }
    if (opt.max_nodes_per_hop && next.size() > *opt.max_nodes_per_hop) {
      std::sort(next.begin(), next.end());
      rng.shuffle(next);
      next.resize(*opt.max_nodes_per_hop);
      std::sort(next.begin(), next.end());
    }
    for (NodeId y : next) {
      if (!seen_global[y]) {
        seen_global[y] = 1;
        members.push_back(y);
      }
    }
    frontier = std::move(next);
  }
}

std::vector<Distance> local_bfs(const LabeledSubgraph& sub, std::uint32_t source) {
  std::vector<Distance> dist(sub.size(), kUnreachable);
  std::queue<std::uint32_t> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const auto x = q.front();
    q.pop();
    for (auto k = sub.offsets[x]; k < sub.offsets[x + 1]; ++k) {
      const auto y = sub.neighbors[k];
      if (dist[y] == kUnreachable) {
        dist[y] = dist[x] + 1;
        q.push(y);
      }
    }
  }
  return dist;
}

}  // namespace

LabeledSubgraph extract_ego_subgraph(const Graph& g, NodePair pair, const ExtractOptions& opt) {
  if (pair.u >= g.node_count() || pair.v >= g.node_count()) throw DataError("pair references a node outside the graph");
  if (pair.u == pair.v) throw DataError("pair endpoints must differ");
  if (opt.radius < 1) throw ConfigError("subgraph radius must be at least 1");

  const bool skip_target = opt.remove_target;
  Rng rng(derive_seed(opt.seed, "subgraph.hop", pair.canonical().key()));

  // membership marks are only touched for visited nodes, then reset
  std::vector<char> seen(g.node_count(), 0);
  std::vector<NodeId> members{pair.u, pair.v};
  seen[pair.u] = seen[pair.v] = 1;
  collect_ball(g, pair.u, pair, skip_target, opt, rng, seen, members);
  collect_ball(g, pair.v, pair, skip_target, opt, rng, seen, members);
  std::sort(members.begin() + 2, members.end());

  LabeledSubgraph sub;
  sub.target = pair;
  sub.radius = opt.radius;
  sub.nodes = std::move(members);
  std::unordered_map<NodeId, std::uint32_t> local;
  local.reserve(sub.nodes.size() * 2);
  for (std::uint32_t i = 0; i < sub.nodes.size(); ++i) local.emplace(sub.nodes[i], i);

  sub.offsets.assign(sub.nodes.size() + 1, 0);
  for (std::uint32_t i = 0; i < sub.nodes.size(); ++i) {
    const NodeId x = sub.nodes[i];
    const auto begin = sub.neighbors.size();
    for (NodeId y : g.neighbors(x)) {
      if (skip_target && is_target_edge(pair, x, y)) continue;
      if (auto it = local.find(y); it != local.end()) sub.neighbors.push_back(it->second);
    }
    std::sort(sub.neighbors.begin() + static_cast<std::ptrdiff_t>(begin), sub.neighbors.end());
    sub.offsets[i + 1] = static_cast<std::uint32_t>(sub.neighbors.size());
  }
  return sub;
}

std::uint32_t drnl(Distance du, Distance dv) {
  if (du == kUnreachable || dv == kUnreachable) throw std::invalid_argument("drnl needs finite distances");
  const std::uint32_t d = du + dv;
  const std::uint32_t half = d / 2;
  return 1 + std::min(du, dv) + half * (half + (d % 2) - 1);
}

const std::vector<DrnlTuple>& drnl_plus(LabeledSubgraph& sub) {
  sub.dist_u = local_bfs(sub, 0);
  sub.dist_v = local_bfs(sub, 1);
  sub.labels.assign(sub.size(), DrnlTuple{});
  for (std::size_t i = 0; i < sub.size(); ++i) {
    const Distance du = sub.dist_u[i];
    const Distance dv = sub.dist_v[i];
    if (i < 2) {
      sub.labels[i] = {1, 0};
    } else if (du == kUnreachable && dv == kUnreachable) {
      throw std::logic_error("subgraph node unreachable from both targets");
    } else if (dv == kUnreachable) {
      sub.labels[i] = {0, du};
    } else if (du == kUnreachable) {
      sub.labels[i] = {0, dv};
    } else {
      sub.labels[i] = {drnl(du, dv), 0};
    }
  }
  return sub.labels;
}

LabeledSubgraph extract_labeled(const Graph& g, NodePair pair, const ExtractOptions& options) {
  LabeledSubgraph sub = extract_ego_subgraph(g, pair, options);
  drnl_plus(sub);
  return sub;
}

std::uint32_t LabelVocab::index(DrnlTuple t) const {
  if (t.b == 0) return std::min(t.a, drnl_cap);
  return drnl_cap + 1 + std::min(t.b, dist_cap);
}

std::vector<std::uint32_t> LabelVocab::indices(const LabeledSubgraph& sub) const {
  std::vector<std::uint32_t> out;
  out.reserve(sub.labels.size());
  for (const auto& t : sub.labels) out.push_back(index(t));
  return out;
}

}  // namespace unilp
