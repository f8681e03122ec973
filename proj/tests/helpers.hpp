#pragma once

#include <vector>

#include "unilp/graph.hpp"
#include "unilp/rng.hpp"

namespace testing {

inline unilp::Graph make_graph(std::size_t n, std::vector<unilp::NodePair> edges) {
  return unilp::Graph::from_edges(n, edges);
}

inline unilp::Graph triangle() { return make_graph(3, {{0, 1}, {1, 2}, {0, 2}}); }

inline unilp::Graph path(std::size_t n) {
  std::vector<unilp::NodePair> e;
  for (unilp::NodeId i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  return make_graph(n, e);
}

inline unilp::Graph complete(std::size_t n) {
  std::vector<unilp::NodePair> e;
  for (unilp::NodeId i = 0; i < n; ++i) {
    for (unilp::NodeId j = i + 1; j < n; ++j) e.push_back({i, j});
  }
  return make_graph(n, e);
}

// G(n, p) with its own generator so tests do not share streams.
inline unilp::Graph random_graph(std::size_t n, double p, std::uint64_t seed) {
  unilp::Rng rng(seed);
  std::vector<unilp::NodePair> e;
  for (unilp::NodeId i = 0; i < n; ++i) {
    for (unilp::NodeId j = i + 1; j < n; ++j) {
      if (rng.bernoulli(p)) e.push_back({i, j});
    }
  }
  return make_graph(n, e);
}

// Same graph with node i renamed perm[i].
inline unilp::Graph relabel(const unilp::Graph& g, const std::vector<unilp::NodeId>& perm) {
  std::vector<unilp::NodePair> e;
  for (const auto& p : g.edges()) e.push_back({perm[p.u], perm[p.v]});
  return make_graph(g.node_count(), e);
}

inline std::vector<unilp::NodeId> random_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<unilp::NodeId> perm(n);
  for (unilp::NodeId i = 0; i < n; ++i) perm[i] = i;
  unilp::Rng rng(seed);
  rng.shuffle(perm);
  return perm;
}

}  // namespace testing
