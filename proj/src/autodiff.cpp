#include "unilp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "unilp/errors.hpp"
#include "unilp/io.hpp"
#include "unilp/rng.hpp"

namespace unilp::ad {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) throw NumericError("tensor value count does not match its shape");
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

std::size_t ParamStore::add(std::string name, Tensor value) {
  for (const auto& n : names_) {
    if (n == name) throw std::invalid_argument("duplicate parameter " + name);
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw std::out_of_range("no parameter named " + name);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Grads zero_grads(const ParamStore& params) {
  Grads g;
  g.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) g.emplace_back(params.value(i).rows, params.value(i).cols);
  return g;
}

void accumulate(Grads& dst, const Grads& src) {
  if (dst.size() != src.size()) throw NumericError("gradient sets differ in length");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].size() != src[i].size()) throw NumericError("gradient shapes differ");
    for (std::size_t k = 0; k < dst[i].size(); ++k) dst[i].data[k] += src[i].data[k];
  }
}

void scale(Grads& g, double factor) {
  for (auto& t : g) {
    for (auto& x : t.data) x *= factor;
  }
}

const Tensor& Var::value() const { return tape_->value(id_); }

double Var::item() const {
  const Tensor& t = value();
  if (t.size() != 1) throw NumericError("item() on a non-scalar tensor");
  return t.data[0];
}

Tape::Tape(const ParamStore* params, bool track_grad)
    : params_(params), track_grad_(track_grad), param_nodes_(params ? params->size() : 0, -1) {}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite value");
  nodes_.push_back(Node{std::move(value), {}, {}, false, -1});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(std::size_t index) {
  if (params_ == nullptr || index >= params_->size()) throw std::out_of_range("parameter index out of range");
  if (param_nodes_[index] >= 0) return {this, static_cast<std::uint32_t>(param_nodes_[index])};
  nodes_.push_back(Node{params_->value(index), {}, {}, track_grad_, static_cast<std::int64_t>(index)});
  param_nodes_[index] = static_cast<std::int64_t>(nodes_.size() - 1);
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(const std::string& name) {
  if (params_ == nullptr) throw std::out_of_range("tape has no parameters");
  return param(params_->index_of(name));
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.rows != n.value.rows) n.grad = Tensor(n.value.rows, n.value.cols);
  return n.grad;
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Pullback pullback, const char* op) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite result");
  bool needs = false;
  if (track_grad_) {
    for (const Var& in : inputs) {
      if (in.tape() != this) throw std::invalid_argument(std::string(op) + ": input from another tape");
      needs = needs || nodes_[in.id()].requires_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(pullback) : Pullback{}, needs, -1});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss from another tape");
  if (nodes_[loss.id()].value.size() != 1) throw NumericError("backward needs a scalar loss");
  for (auto& n : nodes_) n.grad = Tensor();
  grad(loss.id()).data[0] = 1.0;
  for (std::int64_t id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.pullback && n.grad.size() == n.value.size() && n.grad.size() > 0) {
      n.pullback(*this, static_cast<std::uint32_t>(id));
    }
  }
}

Grads Tape::param_grads() const {
  if (params_ == nullptr) return {};
  Grads out = zero_grads(*params_);
  for (std::size_t i = 0; i < param_nodes_.size(); ++i) {
    if (param_nodes_[i] < 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(param_nodes_[i])];
    if (n.grad.size() == out[i].size()) out[i] = n.grad;
  }
  return out;
}

namespace {

void require(bool ok, const char* op, const char* what) {
  if (!ok) throw NumericError(std::string(op) + ": " + what);
}

// c (m x n) += a (m x k) * b (k x n)
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols == B.rows, "matmul", "inner dimensions differ");
  const std::size_t m = A.rows, k = A.cols, n = B.cols;
  Tensor C(m, n);
  gemm_acc(A.data.data(), B.data.data(), C.data.data(), m, k, n);
  return a.tape()->record(std::move(C), {a, b}, [ia = a.id(), ib = b.id(), m, k, n](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    if (t.requires_grad(ia)) {
      // dA += G * B^T
      const Tensor& B = t.value(ib);
      Tensor& dA = t.grad(ia);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G.data[i * n + j] * B.data[p * n + j];
          dA.data[i * k + p] += acc;
        }
      }
    }
    if (t.requires_grad(ib)) {
      // dB += A^T * G
      const Tensor& A = t.value(ia);
      Tensor& dB = t.grad(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A.data[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) dB.data[p * n + j] += aip * G.data[i * n + j];
        }
      }
    }
  }, "matmul");
}

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.rows == B.rows && A.cols == B.cols, "add", "shapes differ");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
  return a.tape()->record(std::move(C), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    for (auto id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Tensor& d = t.grad(id);
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += G.data[i];
    }
  }, "add");
}

Var add_row(Var a, Var row) {
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  require(R.rows == 1 && R.cols == A.cols, "add_row", "row shape does not match");
  Tensor C = A;
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) C.data[i * A.cols + j] += R.data[j];
  }
  return a.tape()->record(std::move(C), {a, row}, [ia = a.id(), ir = row.id()](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& d = t.grad(ia);
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += G.data[i];
    }
    if (t.requires_grad(ir)) {
      Tensor& d = t.grad(ir);
      for (std::size_t i = 0; i < G.rows; ++i) {
        for (std::size_t j = 0; j < G.cols; ++j) d.data[j] += G.data[i * G.cols + j];
      }
    }
  }, "add_row");
}

Var scale(Var a, double factor) {
  Tensor C = a.value();
  for (auto& x : C.data) x *= factor;
  return a.tape()->record(std::move(C), {a}, [ia = a.id(), factor](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    Tensor& d = t.grad(ia);
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += factor * G.data[i];
  }, "scale");
}

Var concat_cols(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.rows == B.rows, "concat_cols", "row counts differ");
  const std::size_t ca = A.cols, cb = B.cols, n = ca + cb;
  Tensor C(A.rows, n);
  for (std::size_t i = 0; i < A.rows; ++i) {
    std::copy_n(A.data.begin() + static_cast<std::ptrdiff_t>(i * ca), ca, C.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    std::copy_n(B.data.begin() + static_cast<std::ptrdiff_t>(i * cb), cb,
                C.data.begin() + static_cast<std::ptrdiff_t>(i * n + ca));
  }
  return a.tape()->record(std::move(C), {a, b}, [ia = a.id(), ib = b.id(), ca, cb, n](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& d = t.grad(ia);
      for (std::size_t i = 0; i < G.rows; ++i) {
        for (std::size_t j = 0; j < ca; ++j) d.data[i * ca + j] += G.data[i * n + j];
      }
    }
    if (t.requires_grad(ib)) {
      Tensor& d = t.grad(ib);
      for (std::size_t i = 0; i < G.rows; ++i) {
        for (std::size_t j = 0; j < cb; ++j) d.data[i * cb + j] += G.data[i * n + ca + j];
      }
    }
  }, "concat_cols");
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  require(begin < end && end <= A.cols, "slice_cols", "column range out of bounds");
  const std::size_t w = end - begin, n = A.cols;
  Tensor C(A.rows, w);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < w; ++j) C.data[i * w + j] = A.data[i * n + begin + j];
  }
  return a.tape()->record(std::move(C), {a}, [ia = a.id(), begin, w, n](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    Tensor& d = t.grad(ia);
    for (std::size_t i = 0; i < G.rows; ++i) {
      for (std::size_t j = 0; j < w; ++j) d.data[i * n + begin + j] += G.data[i * w + j];
    }
  }, "slice_cols");
}

Var repeat_rows(Var row, std::size_t m) {
  const Tensor& R = row.value();
  require(R.rows == 1, "repeat_rows", "input must be a single row");
  Tensor C(m, R.cols);
  for (std::size_t i = 0; i < m; ++i) std::copy(R.data.begin(), R.data.end(), C.data.begin() + static_cast<std::ptrdiff_t>(i * R.cols));
  return row.tape()->record(std::move(C), {row}, [ir = row.id()](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    Tensor& d = t.grad(ir);
    for (std::size_t i = 0; i < G.rows; ++i) {
      for (std::size_t j = 0; j < G.cols; ++j) d.data[j] += G.data[i * G.cols + j];
    }
  }, "repeat_rows");
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  Tensor C(A.cols, A.rows);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) C(j, i) = A(i, j);
  }
  return a.tape()->record(std::move(C), {a}, [ia = a.id()](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    Tensor& d = t.grad(ia);
    for (std::size_t i = 0; i < G.rows; ++i) {
      for (std::size_t j = 0; j < G.cols; ++j) d(j, i) += G(i, j);
    }
  }, "transpose");
}

Var mean_rows(Var a) {
  const Tensor& A = a.value();
  require(A.rows > 0, "mean_rows", "empty input");
  Tensor C(1, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) C.data[j] += A.data[i * A.cols + j];
  }
  const double inv = 1.0 / static_cast<double>(A.rows);
  for (auto& x : C.data) x *= inv;
  return a.tape()->record(std::move(C), {a}, [ia = a.id(), inv](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    Tensor& d = t.grad(ia);
    for (std::size_t i = 0; i < d.rows; ++i) {
      for (std::size_t j = 0; j < d.cols; ++j) d.data[i * d.cols + j] += inv * G.data[j];
    }
  }, "mean_rows");
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data) s += x;
  return a.tape()->record(Tensor(1, 1, s), {a}, [ia = a.id()](Tape& t, std::uint32_t self) {
    const double g = t.grad(self).data[0];
    for (auto& x : t.grad(ia).data) x += g;
  }, "sum");
}

Var leaky_relu(Var a, double slope) {
  Tensor C = a.value();
  for (auto& x : C.data) x = x > 0.0 ? x : slope * x;
  return a.tape()->record(std::move(C), {a}, [ia = a.id(), slope](Tape& t, std::uint32_t self) {
    const Tensor& X = t.value(ia);
    const Tensor& G = t.grad(self);
    Tensor& d = t.grad(ia);
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += (X.data[i] > 0.0 ? 1.0 : slope) * G.data[i];
  }, "leaky_relu");
}

Var sigmoid(Var a) {
  Tensor C = a.value();
  for (auto& x : C.data) x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return a.tape()->record(std::move(C), {a}, [ia = a.id()](Tape& t, std::uint32_t self) {
    const Tensor& Y = t.value(self);
    const Tensor& G = t.grad(self);
    Tensor& d = t.grad(ia);
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += Y.data[i] * (1.0 - Y.data[i]) * G.data[i];
  }, "sigmoid");
}

Var softmax(Var a) {
  const Tensor& A = a.value();
  require(A.cols > 0, "softmax", "empty input");
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    const double* x = A.data.data() + i * A.cols;
    double* y = C.data.data() + i * A.cols;
    const double mx = *std::max_element(x, x + A.cols);
    for (std::size_t j = 0; j < A.cols; ++j) y[j] = std::exp(x[j] - mx);
    // sorted summation makes the normalizer independent of column order
    std::vector<double> terms(y, y + A.cols);
    std::sort(terms.begin(), terms.end());
    double z = 0.0;
    for (double e : terms) z += e;
    for (std::size_t j = 0; j < A.cols; ++j) y[j] /= z;
  }
  return a.tape()->record(std::move(C), {a}, [ia = a.id()](Tape& t, std::uint32_t self) {
    const Tensor& Y = t.value(self);
    const Tensor& G = t.grad(self);
    Tensor& d = t.grad(ia);
    for (std::size_t i = 0; i < Y.rows; ++i) {
      const std::size_t o = i * Y.cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < Y.cols; ++j) dot += G.data[o + j] * Y.data[o + j];
      for (std::size_t j = 0; j < Y.cols; ++j) d.data[o + j] += Y.data[o + j] * (G.data[o + j] - dot);
    }
  }, "softmax");
}

Var embed_lookup(Var table, std::span<const std::uint32_t> indices) {
  const Tensor& T = table.value();
  const std::size_t f = T.cols;
  Tensor C(indices.size(), f);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < T.rows, "embed_lookup", "index out of range");
    std::copy_n(T.data.begin() + static_cast<std::ptrdiff_t>(indices[i] * f), f,
                C.data.begin() + static_cast<std::ptrdiff_t>(i * f));
  }
  return table.tape()->record(std::move(C), {table},
                              [it = table.id(), idx = std::vector<std::uint32_t>(indices.begin(), indices.end()), f](
                                  Tape& t, std::uint32_t self) {
                                const Tensor& G = t.grad(self);
                                Tensor& d = t.grad(it);
                                for (std::size_t i = 0; i < idx.size(); ++i) {
                                  for (std::size_t j = 0; j < f; ++j) d.data[idx[i] * f + j] += G.data[i * f + j];
                                }
                              },
                              "embed_lookup");
}

Var stack_rows(std::span<const Var> rows) {
  require(!rows.empty(), "stack_rows", "no rows");
  Tape* tape = rows.front().tape();
  const std::size_t n = rows.front().cols();
  Tensor C(rows.size(), n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& R = rows[i].value();
    require(R.rows == 1 && R.cols == n && rows[i].tape() == tape, "stack_rows", "rows must be 1 x n on one tape");
    std::copy(R.data.begin(), R.data.end(), C.data.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  std::vector<std::uint32_t> ids;
  for (const Var& r : rows) ids.push_back(r.id());
  return tape->record(std::move(C), rows, [ids = std::move(ids), n](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.requires_grad(ids[i])) continue;
      Tensor& d = t.grad(ids[i]);
      for (std::size_t j = 0; j < n; ++j) d.data[j] += G.data[i * n + j];
    }
  }, "stack_rows");
}

Var neighbor_mean(Var h, std::span<const std::uint32_t> offsets, std::span<const std::uint32_t> neighbors) {
  const Tensor& H = h.value();
  require(offsets.size() == H.rows + 1, "neighbor_mean", "offsets do not match row count");
  const std::size_t f = H.cols;
  Tensor C(H.rows, f);
  for (std::size_t i = 0; i < H.rows; ++i) {
    const auto begin = offsets[i], end = offsets[i + 1];
    if (begin == end) continue;
    double* out = C.data.data() + i * f;
    for (auto k = begin; k < end; ++k) {
      require(neighbors[k] < H.rows, "neighbor_mean", "neighbor index out of range");
      const double* src = H.data.data() + static_cast<std::size_t>(neighbors[k]) * f;
      for (std::size_t j = 0; j < f; ++j) out[j] += src[j];
    }
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (std::size_t j = 0; j < f; ++j) out[j] *= inv;
  }
  return h.tape()->record(std::move(C), {h},
                          [ih = h.id(), off = std::vector<std::uint32_t>(offsets.begin(), offsets.end()),
                           nb = std::vector<std::uint32_t>(neighbors.begin(), neighbors.end()), f](Tape& t, std::uint32_t self) {
                            const Tensor& G = t.grad(self);
                            Tensor& d = t.grad(ih);
                            for (std::size_t i = 0; i + 1 < off.size(); ++i) {
                              const auto begin = off[i], end = off[i + 1];
                              if (begin == end) continue;
                              const double inv = 1.0 / static_cast<double>(end - begin);
                              const double* g = G.data.data() + i * f;
                              for (auto k = begin; k < end; ++k) {
                                double* dst = d.data.data() + static_cast<std::size_t>(nb[k]) * f;
                                for (std::size_t j = 0; j < f; ++j) dst[j] += inv * g[j];
                              }
                            }
                          },
                          "neighbor_mean");
}

Var segment_mean(Var h, std::span<const std::uint32_t> segments) {
  const Tensor& H = h.value();
  require(segments.size() >= 2 && segments.back() == H.rows, "segment_mean", "segments must cover every row");
  const std::size_t f = H.cols, m = segments.size() - 1;
  Tensor C(m, f);
  for (std::size_t s = 0; s < m; ++s) {
    require(segments[s] < segments[s + 1], "segment_mean", "empty segment");
    double* out = C.data.data() + s * f;
    for (auto r = segments[s]; r < segments[s + 1]; ++r) {
      const double* src = H.data.data() + static_cast<std::size_t>(r) * f;
      for (std::size_t j = 0; j < f; ++j) out[j] += src[j];
    }
    const double inv = 1.0 / static_cast<double>(segments[s + 1] - segments[s]);
    for (std::size_t j = 0; j < f; ++j) out[j] *= inv;
  }
  return h.tape()->record(std::move(C), {h},
                          [ih = h.id(), seg = std::vector<std::uint32_t>(segments.begin(), segments.end()), f](
                              Tape& t, std::uint32_t self) {
                            const Tensor& G = t.grad(self);
                            Tensor& d = t.grad(ih);
                            for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
                              const double inv = 1.0 / static_cast<double>(seg[s + 1] - seg[s]);
                              const double* g = G.data.data() + s * f;
                              for (auto r = seg[s]; r < seg[s + 1]; ++r) {
                                double* dst = d.data.data() + static_cast<std::size_t>(r) * f;
                                for (std::size_t j = 0; j < f; ++j) dst[j] += inv * g[j];
                              }
                            }
                          },
                          "segment_mean");
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  require(begin < end && end <= A.rows, "slice_rows", "row range out of bounds");
  const std::size_t n = A.cols;
  Tensor C(end - begin, n, std::vector<double>(A.data.begin() + static_cast<std::ptrdiff_t>(begin * n),
                                                 A.data.begin() + static_cast<std::ptrdiff_t>(end * n)));
  return a.tape()->record(std::move(C), {a}, [ia = a.id(), begin, n](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    Tensor& d = t.grad(ia);
    for (std::size_t i = 0; i < G.size(); ++i) d.data[begin * n + i] += G.data[i];
  }, "slice_rows");
}

Var bce(Var p, double label) {
  require(p.value().size() == 1, "bce", "prediction must be 1 x 1");
  const double raw = p.value().data[0];
  const double q = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
  const double loss = -(label * std::log(q) + (1.0 - label) * std::log(1.0 - q));
  const bool clamped = q != raw;
  return p.tape()->record(Tensor(1, 1, loss), {p}, [ip = p.id(), q, label, clamped](Tape& t, std::uint32_t self) {
    if (clamped) return;
    const double g = t.grad(self).data[0];
    t.grad(ip).data[0] += g * (-(label / q) + (1.0 - label) / (1.0 - q));
  }, "bce");
}

Tensor glorot_uniform(Rng& rng, std::size_t rows, std::size_t cols) {
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (auto& x : t.data) x = rng.uniform(-s, s);
  return t;
}

Tensor normal_tensor(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Tensor t(rows, cols);
  for (auto& x : t.data) x = rng.normal(0.0, stddev);
  return t;
}

void step(OptimState& opt, ParamStore& params, const Grads& grads) {
  if (grads.size() != params.size()) throw NumericError("optimizer: gradient count does not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != params.value(i).size()) throw NumericError("optimizer: gradient shape mismatch for " + params.name(i));
    if (!grads[i].all_finite()) throw NumericError("optimizer: non-finite gradient for " + params.name(i));
  }
  if (opt.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto& p = params.value(i).data;
      for (std::size_t k = 0; k < p.size(); ++k) p[k] -= opt.lr * grads[i].data[k];
    }
    ++opt.step;
    return;
  }
  if (opt.m.size() != params.size()) {
    opt.m = zero_grads(params);
    opt.v = zero_grads(params);
  }
  ++opt.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = params.value(i).data;
    auto& m = opt.m[i].data;
    auto& v = opt.v[i].data;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = grads[i].data[k];
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g;
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g * g;
      p[k] -= opt.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opt.eps);
    }
  }
}

GradCheckResult finite_difference_check(ParamStore& params, const std::function<double(const ParamStore&)>& loss,
                                        const Grads& analytic, double h, double floor) {
  GradCheckResult r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& values = params.value(i).data;
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double up = loss(params);
      values[k] = saved - h;
      const double down = loss(params);
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic[i].data[k];
      const double mag = std::max(std::abs(numeric), std::abs(exact));
      if (mag <= floor) continue;
      ++r.compared;
      const double rel = std::abs(numeric - exact) / mag;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst_param = params.name(i);
      }
    }
  }
  return r;
}

nlohmann::json params_to_json(const ParamStore& params) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out[params.name(i)] = {{"shape", params.value(i).shape()}, {"values", params.value(i).data}};
  }
  return out;
}

ParamStore params_from_json(const nlohmann::json& doc) {
  ParamStore params;
  try {
    for (const auto& [name, entry] : doc.items()) {
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw DataError("parameter " + name + " is not two-dimensional");
      params.add(name, Tensor(shape[0], shape[1], entry.at("values").get<std::vector<double>>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed parameter block: ") + e.what());
  } catch (const NumericError& e) {
    throw DataError(std::string("malformed parameter block: ") + e.what());
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config, const ParamStore& params) {
  nlohmann::json doc = {{"format_version", kCheckpointFormat}, {"config", config}, {"parameters", params_to_json(params)}};
  write_file_atomic(path, doc.dump() + "\n");
}

std::pair<nlohmann::json, ParamStore> load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("cannot parse checkpoint " + path.string() + ": " + e.what());
  }
  if (!doc.contains("format_version") || doc["format_version"] != kCheckpointFormat) {
    throw DataError("unsupported checkpoint format in " + path.string());
  }
  return {doc.value("config", nlohmann::json::object()), params_from_json(doc.at("parameters"))};
}

}  // namespace unilp::ad
