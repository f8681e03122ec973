#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "unilp/autodiff.hpp"
#include "unilp/graph.hpp"
#include "unilp/subgraph.hpp"

namespace unilp {

enum class ModelMode {
  /// Attention over labeled in-context links.
  InContext,
  /// Direct classification of the query encoding (SEAL-style baseline).
  NoContext,
};

struct ModelConfig {
  std::size_t embed_dim = 32;      // label embedding width
  std::size_t hidden_dim = 32;     // encoder output width F
  std::size_t attention_dim = 32;  // key/value width F'
  std::size_t encoder_layers = 3;
  std::size_t mlp_layers = 2;
  std::size_t mlp_hidden = 32;
  std::size_t heads = 1;
  double leaky_slope = 0.01;
  LabelVocab vocab;
  std::uint32_t radius = 1;
  std::optional<std::size_t> max_nodes_per_hop;
  ModelMode mode = ModelMode::InContext;

  /// Throws ConfigError on zero widths, heads not dividing F', radius
  /// outside [1, 3].
  void validate() const;
  ExtractOptions extract_options(std::uint64_t seed = 0) const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc);
std::string mode_name(ModelMode mode);
ModelMode parse_mode(const std::string& name);

enum class ContextSource { TargetGraph, Sbm };

/// Labeled demonstration links. Canonical order is positives then
/// negatives, each in list order.
struct ContextSet {
  std::vector<LabeledSubgraph> positives;
  std::vector<LabeledSubgraph> negatives;
  ContextSource source = ContextSource::TargetGraph;
  /// Set when the positive/negative designations were swapped.
  bool flipped = false;

  std::size_t size() const { return positives.size() + negatives.size(); }
  bool empty() const { return size() == 0; }
  /// Members in canonical order with 1 for positive, 0 for negative.
  std::vector<const LabeledSubgraph*> members() const;
  std::vector<std::uint8_t> labels() const;
  /// Keeps the first n_pos positives and n_neg negatives.
  ContextSet prefix(std::size_t n_pos, std::size_t n_neg) const;
};

/// Context encodings computed once and reused across queries.
struct EncodedContext {
  ad::Tensor encodings;  // M x F
  std::vector<std::uint8_t> labels;
};

/// Subgraph encoder, label-free additive attention over in-context links,
/// label-vector contextualization and MLP head.
///
/// Row-vector convention throughout: a representation is 1 x F and weight
/// matrices are stored input-major (F_in x F_out), so W_k is 2F x F' and
/// W_v is F x F'.
class UniLP {
 public:
  /// Fresh parameters: Glorot-uniform matrices, zero biases, N(0, 0.1)
  /// label embeddings and label vectors.
  UniLP(ModelConfig config, std::uint64_t seed);
  /// Adopts existing parameters; throws DataError when a name is missing or
  /// a shape disagrees with `config`.
  UniLP(ModelConfig config, const ad::ParamStore& params);

  const ModelConfig& config() const { return config_; }
  const ad::ParamStore& params() const { return params_; }
  ad::ParamStore& params() { return params_; }

  // Tape-level pieces. Each expects a tape built over params().

  /// One row per subgraph: label embedding, `encoder_layers` rounds of
  /// h <- LeakyReLU(h W_self + mean_nbr(h) W_neigh + b), mean pooling.
  ad::Var encode(ad::Tape& tape, std::span<const LabeledSubgraph* const> subgraphs) const;
  /// Single-head scores: softmax over a_s = LeakyReLU([h_q | h_s] W_k) p^T.
  ad::Var attention(ad::Tape& tape, ad::Var h_query, ad::Var h_context) const;
  /// sum_s alpha_s (h_s + l_{y_s}) W_v.
  ad::Var contextualize(ad::Tape& tape, ad::Var alpha, ad::Var h_context, std::span<const std::uint8_t> labels) const;
  /// Attention plus contextualization with config().heads heads; each head
  /// owns a contiguous slice of p, of the W_k columns and of the W_v
  /// columns.
  ad::Var attend(ad::Tape& tape, ad::Var h_query, ad::Var h_context, std::span<const std::uint8_t> labels) const;
  /// sigmoid(MLP(h)).
  ad::Var predict(ad::Tape& tape, ad::Var h_tilde) const;
  /// Full pipeline on already-extracted subgraphs. The no-context mode
  /// ignores `context` and predicts from h_q W_v.
  ad::Var forward(ad::Tape& tape, const LabeledSubgraph& query, const ContextSet& context) const;
  /// Forward with context encodings held as constants.
  ad::Var forward(ad::Tape& tape, const LabeledSubgraph& query, const EncodedContext& context) const;

  // Value-level conveniences (no gradients).

  ad::Tensor encode_value(const LabeledSubgraph& sub) const;
  EncodedContext encode_context(const ContextSet& context) const;
  std::vector<double> attention_weights(const LabeledSubgraph& query, const ContextSet& context) const;
  /// Probability clamped to [1e-12, 1 - 1e-12].
  double predict_probability(const LabeledSubgraph& query, const ContextSet& context) const;
  double predict_probability(const LabeledSubgraph& query, const EncodedContext& context) const;
  /// Extracts the query from `g` (own edge hidden) and predicts. Throws
  /// ConfigError when the query appears in the context, or when an
  /// in-context model gets an empty context.
  double predict_pair(const Graph& g, NodePair query, const ContextSet& context) const;

  nlohmann::json config_json() const { return to_json(config_); }

 private:
  void check_context(const LabeledSubgraph& query, std::size_t context_size) const;
  ad::Var head_input(ad::Tape& tape, ad::Var h_query, ad::Var h_context, std::span<const std::uint8_t> labels) const;

  ModelConfig config_;
  ad::ParamStore params_;
};

}  // namespace unilp
