#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "unilp/autodiff.hpp"
#include "unilp/graph.hpp"
#include "unilp/model.hpp"
#include "unilp/split.hpp"

namespace unilp {

/// A split graph ready for training or evaluation.
struct Dataset {
  std::string name;
  DataSplit split;
  /// Structure for extraction, heuristics and context positives.
  Graph observed;
  /// Observed plus held-out positives; negatives are drawn outside it.
  Graph full;
};

Dataset make_dataset(std::string name, DataSplit split);
/// Every edge observed, no held-out links. Used for graphs that only
/// contribute training queries.
Dataset make_unsplit_dataset(std::string name, const Graph& g);

struct LabeledPair {
  NodePair pair;
  std::uint8_t label = 0;
  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

/// Observed edges as positives plus the same number of non-edges of the full
/// graph, in a seeded shuffled order.
std::vector<LabeledPair> build_training_pool(const Dataset& d, std::uint64_t seed);

/// Memoized labeled extraction over one graph. Not thread-safe.
class SubgraphCache {
 public:
  SubgraphCache(const Graph& g, ExtractOptions options) : graph_(&g), options_(options) {}
  const LabeledSubgraph& get(NodePair pair);
  std::size_t size() const { return cache_.size(); }

 private:
  const Graph* graph_;
  ExtractOptions options_;
  std::unordered_map<std::uint64_t, LabeledSubgraph> cache_;
};

struct ContextPairs {
  std::vector<NodePair> positives;
  std::vector<NodePair> negatives;
};

/// k_pos uniform observed edges and k_neg uniform non-edges of the full
/// graph, never including `exclude`. Throws DataError when the graph holds
/// too few of either.
/// Largest feasible per-side context: min(observed edges, non-edges of the
/// full graph).
std::size_t context_capacity(const Dataset& d);
ContextPairs sample_context_pairs(const Dataset& d, std::size_t k_pos, std::size_t k_neg, std::uint64_t seed,
                                  std::optional<NodePair> exclude = std::nullopt);
ContextSet build_context(const ContextPairs& pairs, SubgraphCache& cache,
                         ContextSource source = ContextSource::TargetGraph);
/// Per-side k, extracted through `cache`.
ContextSet sample_context(const Dataset& d, SubgraphCache& cache, std::size_t k, std::uint64_t seed,
                          std::optional<NodePair> exclude = std::nullopt);

struct TrainConfig {
  /// Per-side in-context links for each training query.
  std::size_t context_k = 40;
  std::size_t batch_size = 32;
  ad::OptimizerKind optimizer = ad::OptimizerKind::Adam;
  double lr = 1e-3;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  /// Queries each graph contributes per epoch.
  std::size_t queries_per_graph = 2000;
  /// Per-side context size of the fixed validation contexts.
  std::size_t eval_context_size = 200;
  /// Links per dataset in the merged validation set, half positive.
  std::size_t val_links = 200;
  std::size_t hits_k = 50;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;

  void validate(ModelMode mode) const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& doc);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_metric = 0.0;
  double val_loss = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainRecord {
  std::vector<EpochRecord> epochs;
  /// 0 means the initial parameters were kept.
  std::size_t best_epoch = 0;
  double best_metric = -1.0;
  double best_val_loss = 0.0;
  std::size_t stop_epoch = 0;
  /// "patience", "max_epochs", "diverged" or "no_validation".
  std::string stop_reason;
  friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

std::string train_record_csv(const TrainRecord& record);

struct TrainResult {
  UniLP model;
  TrainRecord record;
};

/// Mean BCE minimization over round-robin queries from `train`, with a fresh
/// context per query drawn from the query's own graph. After every epoch the
/// merged validation metric (mean Hits@K over `validation`) decides early
/// stopping; ties at the best metric go to the lower validation loss.
/// Returns the best parameters seen. With no validation datasets every epoch
/// runs and the final parameters are returned.
TrainResult pretrain(const UniLP& init, const std::vector<const Dataset*>& train,
                     const std::vector<const Dataset*>& validation, const TrainConfig& config,
                     const std::function<void(const EpochRecord&)>& on_epoch = {});

struct FinetuneResult {
  UniLP model;
  /// Mean batch loss per optimizer step.
  std::vector<double> step_loss;
};

/// `steps` optimizer updates on n_links observed positives and n_links
/// non-edges of `target`, cycling through the pool in batches.
FinetuneResult finetune(const UniLP& model, const Dataset& target, std::size_t n_links, std::size_t steps,
                        const TrainConfig& config);

/// Mean BCE over a fixed pool with per-query contexts seeded by `seed`.
double pool_loss(const UniLP& model, const Dataset& d, const std::vector<LabeledPair>& pool,
                 const TrainConfig& config, std::uint64_t seed);

struct TransferResult {
  double hits_target_only = 0.0;
  double hits_with_extra = 0.0;
  double delta = 0.0;
  std::size_t k = 0;
  TrainRecord record_target_only;
  TrainRecord record_with_extra;
};

/// Trains one no-context model on the target alone and one on the target
/// plus the training queries of `extra`, from the same initialization, and
/// scores both on the target's test links.
TransferResult transfer_probe(const Dataset& target, const Graph& extra, const ModelConfig& model_config,
                              const TrainConfig& config);

}  // namespace unilp
