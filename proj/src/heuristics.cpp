#include "unilp/heuristics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "unilp/errors.hpp"

namespace unilp {

HeuristicKind parse_heuristic(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "cn") return HeuristicKind::CommonNeighbors;
  if (lower == "aa") return HeuristicKind::AdamicAdar;
  if (lower == "ra") return HeuristicKind::ResourceAllocation;
  if (lower == "pa") return HeuristicKind::PreferentialAttachment;
  if (lower == "sp") return HeuristicKind::ShortestPath;
  if (lower == "katz") return HeuristicKind::Katz;
  throw ConfigError("unknown heuristic '" + std::string(name) + "'");
}

std::string heuristic_name(HeuristicKind kind) {
  switch (kind) {
    case HeuristicKind::CommonNeighbors: return "cn";
    case HeuristicKind::AdamicAdar: return "aa";
    case HeuristicKind::ResourceAllocation: return "ra";
    case HeuristicKind::PreferentialAttachment: return "pa";
    case HeuristicKind::ShortestPath: return "sp";
    case HeuristicKind::Katz: return "katz";
  }
  return "?";
}

std::optional<std::string> katz_warning(const HeuristicSpec& spec, const Graph& g) {
  if (spec.kind != HeuristicKind::Katz) return std::nullopt;
  const double bound = 1.0 / static_cast<double>(g.max_degree() + 1);
  if (spec.katz_beta < bound) return std::nullopt;
  return "katz beta " + std::to_string(spec.katz_beta) + " >= 1/(max_degree+1) = " + std::to_string(bound);
}

namespace {

template <typename F>
void for_common_neighbors(const Graph& g, NodeId u, NodeId v, F&& f) {
  auto a = g.neighbors(u);
  auto b = g.neighbors(v);
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      f(*i);
      ++i;
      ++j;
    }
  }
}

double katz(const Graph& g, NodeId u, NodeId v, double beta, std::size_t len, bool skip_pair) {
  // walk counts from u, one adjacency multiplication per step
  std::vector<double> walks(g.node_count(), 0.0);
  std::vector<double> next(g.node_count(), 0.0);
  walks[u] = 1.0;
  double total = 0.0;
  double decay = 1.0;
  for (std::size_t step = 1; step <= len; ++step) {
    std::fill(next.begin(), next.end(), 0.0);
    for (NodeId x = 0; x < g.node_count(); ++x) {
      if (walks[x] == 0.0) continue;
      for (NodeId y : g.neighbors(x)) {
        if (skip_pair && ((x == u && y == v) || (x == v && y == u))) continue;
        next[y] += walks[x];
      }
    }
    walks.swap(next);
    decay *= beta;
    total += decay * walks[v];
  }
  return total;
}

}  // namespace

double score(const HeuristicSpec& spec, const Graph& g, NodePair pair) {
  const NodeId u = pair.u;
  const NodeId v = pair.v;
  if (u >= g.node_count() || v >= g.node_count()) throw DataError("pair references a node outside the graph");
  if (u == v) throw DataError("pair endpoints must differ");
  const bool linked = g.has_edge(u, v);

  switch (spec.kind) {
    case HeuristicKind::CommonNeighbors: {
      double cn = 0.0;
      for_common_neighbors(g, u, v, [&](NodeId) { cn += 1.0; });
      return cn;
    }
    case HeuristicKind::AdamicAdar: {
      double aa = 0.0;
      for_common_neighbors(g, u, v, [&](NodeId w) {
        const auto d = g.degree(w);
        if (d < 2) throw NumericError("common neighbor with degree < 2");
        aa += 1.0 / std::log(static_cast<double>(d));
      });
      return aa;
    }
    case HeuristicKind::ResourceAllocation: {
      double ra = 0.0;
      for_common_neighbors(g, u, v, [&](NodeId w) { ra += 1.0 / static_cast<double>(g.degree(w)); });
      return ra;
    }
    case HeuristicKind::PreferentialAttachment: {
      const auto own = linked ? 1.0 : 0.0;
      return (static_cast<double>(g.degree(u)) - own) * (static_cast<double>(g.degree(v)) - own);
    }
    case HeuristicKind::ShortestPath: {
      const Distance d = shortest_path(g, u, v, linked ? std::optional<NodePair>(pair) : std::nullopt);
      if (d == kUnreachable) return -std::numeric_limits<double>::infinity();
      return -static_cast<double>(d);
    }
    case HeuristicKind::Katz:
      if (!(spec.katz_beta > 0.0 && spec.katz_beta < 1.0) || spec.katz_len < 1) {
        throw ConfigError("katz needs beta in (0,1) and length >= 1");
      }
      return katz(g, u, v, spec.katz_beta, spec.katz_len, linked);
  }
  return 0.0;
}

std::vector<double> score_batch(const HeuristicSpec& spec, const Graph& g, std::span<const NodePair> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    try {
      out.push_back(score(spec, g, pairs[i]));
    } catch (const DataError& e) {
      throw DataError("pair " + std::to_string(i) + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("pair " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace unilp
