#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace unilp {
class Rng;
}

namespace unilp::ad {

/// Dense row-major matrix of doubles. Vectors are 1 x n rows.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::vector<std::size_t> shape() const { return {rows, cols}; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool all_finite() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Named learnable tensors in registration order.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value);
  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }
  Tensor& value(std::size_t i) { return values_[i]; }
  /// Throws std::out_of_range for unknown names.
  std::size_t index_of(const std::string& name) const;
  const Tensor& operator[](const std::string& name) const { return values_[index_of(name)]; }
  Tensor& operator[](const std::string& name) { return values_[index_of(name)]; }
  std::size_t scalar_count() const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// Gradients aligned with a ParamStore.
using Grads = std::vector<Tensor>;

Grads zero_grads(const ParamStore& params);
/// dst += src, entry by entry in a fixed order.
void accumulate(Grads& dst, const Grads& src);
void scale(Grads& g, double factor);

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  const Tensor& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  /// Scalar value of a 1 x 1 node.
  double item() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Records a forward computation for one reverse sweep. Single-threaded; use
/// one tape per thread.
class Tape {
 public:
  using Pullback = std::function<void(Tape&, std::uint32_t self)>;

  /// With `track_grad` false every node is a constant and nothing is
  /// recorded for the backward pass.
  explicit Tape(const ParamStore* params = nullptr, bool track_grad = true);

  Var constant(Tensor value);
  /// Leaf for parameter `index`; repeated calls return the same node.
  Var param(std::size_t index);
  Var param(const std::string& name);

  /// Reverse sweep from a 1 x 1 node. Throws NumericError otherwise.
  void backward(Var loss);

  /// Gradients of every registered parameter (zeros where unused).
  Grads param_grads() const;

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  /// Gradient buffer of a node, allocated on first use.
  Tensor& grad(std::uint32_t id);
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }
  bool tracking() const { return track_grad_; }

  /// Appends a result node. The pullback is kept only when some input needs
  /// gradients. Throws NumericError on non-finite values.
  Var record(Tensor value, std::initializer_list<Var> inputs, Pullback pullback, const char* op) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(pullback), op);
  }
  Var record(Tensor value, std::span<const Var> inputs, Pullback pullback, const char* op);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Pullback pullback;
    bool requires_grad = false;
    std::int64_t param_index = -1;
  };
  const ParamStore* params_;
  bool track_grad_;
  std::vector<Node> nodes_;
  std::vector<std::int64_t> param_nodes_;
};

// Differentiable operations. Shape mismatches throw NumericError.

/// a (m x k) * b (k x n).
Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// Adds a 1 x n row to every row of a (m x n).
Var add_row(Var a, Var row);
Var scale(Var a, double factor);
/// [a | b] along columns.
Var concat_cols(Var a, Var b);
/// Columns [begin, end).
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// m copies of a 1 x n row.
Var repeat_rows(Var row, std::size_t m);
Var transpose(Var a);
/// Column means, 1 x n.
Var mean_rows(Var a);
/// Sum of all entries, 1 x 1.
Var sum(Var a);
Var leaky_relu(Var a, double slope = 0.01);
Var sigmoid(Var a);
/// Row-wise softmax.
Var softmax(Var a);
/// Rows of `table` picked by `indices`.
Var embed_lookup(Var table, std::span<const std::uint32_t> indices);
/// Stacks 1 x n rows into an m x n matrix.
Var stack_rows(std::span<const Var> rows);
/// Row i becomes the mean of the rows listed in neighbors[offsets[i] ..
/// offsets[i+1]); rows without neighbors become zero.
Var neighbor_mean(Var h, std::span<const std::uint32_t> offsets, std::span<const std::uint32_t> neighbors);
/// Row s becomes the mean of rows [segments[s], segments[s+1]).
Var segment_mean(Var h, std::span<const std::uint32_t> segments);
/// Rows [begin, end).
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// Binary cross-entropy of a 1 x 1 probability, clamped to [1e-12, 1 - 1e-12].
Var bce(Var p, double label);

inline constexpr double kProbClamp = 1e-12;

/// Glorot-uniform matrix: U(-s, s), s = sqrt(6 / (rows + cols)).
Tensor glorot_uniform(Rng& rng, std::size_t rows, std::size_t cols);
Tensor normal_tensor(Rng& rng, std::size_t rows, std::size_t cols, double stddev);

enum class OptimizerKind { Sgd, Adam };

struct OptimState {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One optimizer update in place. Throws NumericError for non-finite
/// gradients (parameters untouched) or mismatched shapes.
void step(OptimState& opt, ParamStore& params, const Grads& grads);

/// Central-difference comparison of analytic gradients.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t compared = 0;
  std::string worst_param;
};

/// Perturbs every scalar of `params` by +-h and compares the numeric slope of
/// `loss` with `analytic`. Entries where both magnitudes are <= `floor` are
/// skipped.
GradCheckResult finite_difference_check(ParamStore& params, const std::function<double(const ParamStore&)>& loss,
                                        const Grads& analytic, double h = 1e-5, double floor = 1e-6);

inline constexpr int kCheckpointFormat = 1;

nlohmann::json params_to_json(const ParamStore& params);
ParamStore params_from_json(const nlohmann::json& doc);

/// {format_version, config, parameters: name -> {shape, values}}.
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config, const ParamStore& params);
std::pair<nlohmann::json, ParamStore> load_checkpoint(const std::filesystem::path& path);

}  // namespace unilp::ad
