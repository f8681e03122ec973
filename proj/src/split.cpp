#include "unilp/split.hpp"

#include <cmath>

#include "unilp/errors.hpp"
#include "unilp/io.hpp"
#include "unilp/rng.hpp"

namespace unilp {

PairSet DataSplit::all_positive() const {
  PairSet all(observed);
  for (const auto& e : valid_pos) all.insert(e);
  for (const auto& e : test_pos) all.insert(e);
  return all;
}

std::vector<NodePair> sample_nonedges(const Graph& g, std::size_t count, std::uint64_t seed,
                                      const PairSet& exclude) {
  if (count == 0) return {};
  const std::uint64_t n = g.node_count();
  const std::uint64_t total = n < 2 ? 0 : n * (n - 1) / 2;
  const std::uint64_t available = total - g.edge_count() - exclude.count_nonedges_of(g);
  if (available < count) {
    throw DataError("need " + std::to_string(count) + " non-edges but only " +
                    std::to_string(available) + " are available");
  }
  Rng rng(seed);
  std::vector<NodePair> out;
  out.reserve(count);
  auto usable = [&](NodePair p) { return !g.has_edge(p) && !exclude.contains(p); };

  if (4 * static_cast<std::uint64_t>(count) <= available) {
    PairSet chosen;
    while (out.size() < count) {
      const auto u = static_cast<NodeId>(rng.uniform_index(n));
      const auto v = static_cast<NodeId>(rng.uniform_index(n));
      if (u == v) continue;
      const NodePair p = NodePair{u, v}.canonical();
      if (usable(p) && chosen.insert(p)) out.push_back(p);
    }
    return out;
  }

  // Dense case: enumerate every candidate and draw a prefix of a shuffle.
  std::vector<NodePair> candidates;
  candidates.reserve(available);
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      if (usable({u, v})) candidates.push_back({u, v});
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
    out.push_back(candidates[i]);
  }
  return out;
}

DataSplit split_edges(const Graph& g, const SplitFractions& f, std::uint64_t seed) {
  if (!(f.train > 0 && f.valid > 0 && f.test > 0) || std::abs(f.train + f.valid + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be positive and sum to 1");
  }
  if (g.edge_count() < 10) throw DataError("graph has fewer than 10 edges; cannot split");

  std::vector<NodePair> edges = g.edges();
  Rng rng(derive_seed(seed, "split.edges"));
  rng.shuffle(edges);
  const auto m = static_cast<double>(edges.size());
  const auto n_valid = static_cast<std::size_t>(std::floor(m * f.valid));
  const auto n_test = static_cast<std::size_t>(std::floor(m * f.test));

  DataSplit s;
  s.seed = seed;
  s.node_count = g.node_count();
  s.id_map.resize(g.node_count());
  for (std::size_t i = 0; i < s.id_map.size(); ++i) s.id_map[i] = static_cast<std::int64_t>(i);
  auto it = edges.begin();
  s.valid_pos.assign(it, it + static_cast<std::ptrdiff_t>(n_valid));
  it += static_cast<std::ptrdiff_t>(n_valid);
  s.test_pos.assign(it, it + static_cast<std::ptrdiff_t>(n_test));
  it += static_cast<std::ptrdiff_t>(n_test);
  s.observed.assign(it, edges.end());
  std::sort(s.observed.begin(), s.observed.end());

  auto negatives = sample_nonedges(g, n_valid + n_test, derive_seed(seed, "split.negatives"));
  s.valid_neg.assign(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(n_valid));
  s.test_neg.assign(negatives.begin() + static_cast<std::ptrdiff_t>(n_valid), negatives.end());
  return s;
}

namespace {

nlohmann::json pairs_to_json(const std::vector<NodePair>& pairs) {
  auto arr = nlohmann::json::array();
  for (const auto& p : pairs) {
    const auto c = p.canonical();
    arr.push_back({c.u, c.v});
  }
  return arr;
}

std::vector<NodePair> pairs_from_json(const nlohmann::json& arr, std::size_t n, const char* field) {
  std::vector<NodePair> out;
  for (const auto& item : arr) {
    if (!item.is_array() || item.size() != 2) {
      throw DataError(std::string("split field '") + field + "' holds a non-pair entry");
    }
    const auto u = item[0].get<std::uint64_t>();
    const auto v = item[1].get<std::uint64_t>();
    if (u >= n || v >= n || u == v) {
      throw DataError(std::string("split field '") + field + "' holds an invalid pair");
    }
    out.push_back(NodePair{static_cast<NodeId>(u), static_cast<NodeId>(v)}.canonical());
  }
  return out;
}

}  // namespace

nlohmann::json split_to_json(const DataSplit& s) {
  return {{"seed", s.seed},
          {"node_count", s.node_count},
          {"id_map", s.id_map},
          {"observed", pairs_to_json(s.observed)},
          {"valid_pos", pairs_to_json(s.valid_pos)},
          {"valid_neg", pairs_to_json(s.valid_neg)},
          {"test_pos", pairs_to_json(s.test_pos)},
          {"test_neg", pairs_to_json(s.test_neg)}};
}

DataSplit split_from_json(const nlohmann::json& doc) {
  try {
    DataSplit s;
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.id_map = doc.at("id_map").get<std::vector<std::int64_t>>();
    s.node_count = doc.contains("node_count") ? doc["node_count"].get<std::size_t>() : s.id_map.size();
    s.observed = pairs_from_json(doc.at("observed"), s.node_count, "observed");
    s.valid_pos = pairs_from_json(doc.at("valid_pos"), s.node_count, "valid_pos");
    s.valid_neg = pairs_from_json(doc.at("valid_neg"), s.node_count, "valid_neg");
    s.test_pos = pairs_from_json(doc.at("test_pos"), s.node_count, "test_pos");
    s.test_neg = pairs_from_json(doc.at("test_neg"), s.node_count, "test_neg");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed split document: ") + e.what());
  }
}

void save_split(const DataSplit& split, const std::filesystem::path& path) {
  write_file_atomic(path, split_to_json(split).dump() + "\n");
}

DataSplit load_split(const std::filesystem::path& path) {
  try {
    return split_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("cannot parse split " + path.string() + ": " + e.what());
  }
}

}  // namespace unilp
