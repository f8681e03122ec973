#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "unilp/graph.hpp"
#include "unilp/heuristics.hpp"
#include "unilp/model.hpp"
#include "unilp/training.hpp"

namespace unilp {

/// Fraction of positives scoring strictly above the k-th highest negative.
/// Throws ConfigError when k is 0 or exceeds the negative count, or when
/// either list is empty.
double hits_at_k(std::span<const double> pos, std::span<const double> neg, std::size_t k);

/// min(requested, negatives), the desk-scale fallback for small test sets.
inline std::size_t effective_k(std::size_t requested, std::size_t negatives) {
  return requested < negatives ? requested : negatives;
}

/// num / den kept exactly; reduced to lowest terms. den == 0 means undefined.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 0;

  static Rational reduced(std::uint64_t num, std::uint64_t den);
  bool defined() const { return den != 0; }
  double value() const;
  std::string str() const;
  friend bool operator==(const Rational&, const Rational&) = default;
};

struct PatternStats {
  Rational p_a2;
  Rational p_a3;
  std::uint64_t pairs = 0;
  std::uint64_t a2_pairs = 0;
  std::uint64_t a2_links = 0;
  std::uint64_t a3_pairs = 0;
  std::uint64_t a3_links = 0;
  /// Empty when every unordered pair was enumerated.
  std::vector<NodeId> anchors;
};

inline constexpr std::uint64_t kMaxPatternPairs = 50000;

/// Exact p(y=1 | A_2) and p(y=1 | A_3), where A_l means a simple path of l
/// edges joins the pair once the pair's own edge is hidden, and y=1 means the
/// pair is in `links`. Enumerates every unordered pair, or only pairs with an
/// anchor endpoint when `anchors` is given. Throws ConfigError when more than
/// kMaxPatternPairs pairs would be enumerated without anchors.
PatternStats verify_connectivity_pattern(const Graph& g, const PairSet& links,
                                         const std::vector<NodeId>& anchors = {});
/// Links default to the edges of `g`.
PatternStats verify_connectivity_pattern(const Graph& g);
nlohmann::json to_json(const PatternStats& stats);

/// Pairs of `g` satisfying exactly one of A_2 and A_3 (own edge hidden).
struct PatternPairs {
  std::vector<NodePair> a2_only;
  std::vector<NodePair> a3_only;
};
PatternPairs classify_pattern_pairs(const Graph& g);

enum class Perturbation { None, FlipLabel, RandomContext };
std::string perturbation_name(Perturbation p);
Perturbation parse_perturbation(const std::string& name);

/// Default SBM for random contexts: two blocks of 50, p_in 0.3, p_out 0.01.
SbmSpec default_context_sbm();

/// FlipLabel swaps the positive and negative members and toggles `flipped`.
/// RandomContext rebuilds a context of the same per-side sizes from a seeded
/// SBM graph with correct labels.
ContextSet perturb_context(const ContextSet& ctx, Perturbation mode, const SbmSpec& sbm, std::uint64_t seed,
                           const ExtractOptions& extract = {});

struct EvalOptions {
  /// Per-side context size; the total 2 * context_size is split by `ratio`.
  std::size_t context_size = 200;
  /// Fraction of the context that is positive.
  double ratio = 0.5;
  std::size_t runs = 1;
  std::size_t hits_k = 50;
  Perturbation perturb = Perturbation::None;
  SbmSpec sbm = default_context_sbm();
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::string experiment;
  std::string dataset;
  std::string mode;
  std::size_t context_size = 0;
  double ratio = 0.5;
  std::string perturb = "none";
  std::uint64_t seed = 0;
  std::size_t k = 0;
  std::vector<double> runs;
  double mean = 0.0;
  /// Sample standard deviation (n - 1); 0 for a single run.
  double std = 0.0;
  std::string note;
  nlohmann::json config;

  std::string metric() const { return "hits@" + std::to_string(k); }
};

double mean_of(std::span<const double> xs);
double sample_std(std::span<const double> xs);
/// Spearman rank correlation with average ranks for ties; 0 when either side
/// is constant.
double spearman(std::span<const double> x, std::span<const double> y);

/// Per-side context counts for `options` on `d`, clipped to the graph.
std::pair<std::size_t, std::size_t> context_counts(const Dataset& d, std::size_t context_size, double ratio);

/// Scores every test link against one fixed context per run.
EvalReport evaluate_model(const UniLP& model, const Dataset& d, const EvalOptions& options);

/// Scores `pairs` (extracted from `g`) against a fixed context.
std::vector<double> score_pairs(const UniLP& model, const Graph& g, std::span<const NodePair> pairs,
                                const EncodedContext& context, std::size_t jobs = 1, std::uint64_t extract_seed = 0);

struct SweepResult {
  std::vector<EvalReport> reports;
  double spearman = 0.0;
};

/// One evaluation per size; each run samples the largest context once and
/// smaller sizes use its prefixes. Sizes above capacity are clipped and
/// duplicates dropped.
SweepResult context_size_sweep(const UniLP& model, const Dataset& d, const std::vector<std::size_t>& sizes,
                               const EvalOptions& options);

/// Hits@K of a heuristic on the test links, scored on the observed graph.
EvalReport evaluate_heuristic(const HeuristicSpec& spec, const Dataset& d, std::size_t hits_k);

std::string report_csv_header();
std::string report_csv_rows(const EvalReport& report);
nlohmann::json to_json(const EvalReport& report);

}  // namespace unilp
