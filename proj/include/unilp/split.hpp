#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "unilp/graph.hpp"
#include "json.hpp"

namespace unilp {

struct SplitFractions {
  double train = 0.7;
  double valid = 0.1;
  double test = 0.2;
};

/// Edge partition of one graph into observed / validation / test links with
/// one sampled non-edge per held-out positive.
struct DataSplit {
  std::uint64_t seed = 0;
  std::size_t node_count = 0;
  /// Original file id of each dense node id; identity when the graph was
  /// generated rather than loaded.
  std::vector<std::int64_t> id_map;
  std::vector<NodePair> observed;
  std::vector<NodePair> valid_pos;
  std::vector<NodePair> valid_neg;
  std::vector<NodePair> test_pos;
  std::vector<NodePair> test_neg;

  /// The graph all structure is computed on.
  Graph observed_graph() const { return Graph::from_edges(node_count, observed); }

  /// Observed, validation and test positives.
  PairSet all_positive() const;

  friend bool operator==(const DataSplit&, const DataSplit&) = default;
};

/// Uniform random partition: floor(valid * |E|) validation edges,
/// floor(test * |E|) test edges, the remainder observed. Negatives are
/// uniform non-edges of `g`, disjoint between validation and test.
/// Throws ConfigError for bad fractions and DataError for graphs with fewer
/// than 10 edges or too few non-edges.
DataSplit split_edges(const Graph& g, const SplitFractions& fractions, std::uint64_t seed);

/// `count` distinct uniform non-edges of `g` that are not in `exclude`, in
/// draw order. Throws DataError when fewer candidates exist.
std::vector<NodePair> sample_nonedges(const Graph& g, std::size_t count, std::uint64_t seed,
                                      const PairSet& exclude = {});

nlohmann::json split_to_json(const DataSplit& split);
DataSplit split_from_json(const nlohmann::json& doc);

void save_split(const DataSplit& split, const std::filesystem::path& path);
DataSplit load_split(const std::filesystem::path& path);

}  // namespace unilp
