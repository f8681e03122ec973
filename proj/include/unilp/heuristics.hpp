#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unilp/graph.hpp"

namespace unilp {

enum class HeuristicKind { CommonNeighbors, AdamicAdar, ResourceAllocation, PreferentialAttachment, ShortestPath, Katz };

struct HeuristicSpec {
  HeuristicKind kind = HeuristicKind::CommonNeighbors;
  double katz_beta = 0.005;
  std::size_t katz_len = 5;
};

/// Accepts cn, aa, ra, pa, sp, katz (case-insensitive).
HeuristicKind parse_heuristic(std::string_view name);
std::string heuristic_name(HeuristicKind kind);

/// Non-empty when beta >= 1 / (max_degree + 1), where the Katz series is not
/// guaranteed to be dominated by short walks.
std::optional<std::string> katz_warning(const HeuristicSpec& spec, const Graph& g);

/// Scores one pair; larger means more likely linked. When the pair is an
/// edge of `g` it is scored as if that edge were absent. Shortest path
/// returns the negated hop distance, -infinity when unreachable.
double score(const HeuristicSpec& spec, const Graph& g, NodePair pair);

/// Elementwise `score`. A failure is rethrown naming the pair index.
std::vector<double> score_batch(const HeuristicSpec& spec, const Graph& g, std::span<const NodePair> pairs);

}  // namespace unilp
