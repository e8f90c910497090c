#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pmr/random.hpp"

namespace pmr {

using Vector = std::vector<double>;

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// Hashed bag-of-words features: sorted unique indices with their counts.
struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  std::size_t nnz() const { return index.size(); }
  Vector to_dense() const;
};

// One named tensor with its gradient. grad is either empty (not yet
// populated) or the same size as value.
struct Param {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const { return value.size(); }
  std::span<double> value_row(std::size_t r) { return {value.data() + r * cols, cols}; }
  std::span<const double> value_row(std::size_t r) const { return {value.data() + r * cols, cols}; }
  std::span<double> grad_row(std::size_t r) { return {grad.data() + r * cols, cols}; }
};

class ParamGroup {
 public:
  ParamGroup() = default;
  explicit ParamGroup(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  // The returned reference is invalidated by the next add.
  Param& add(std::string name, std::size_t rows, std::size_t cols);
  Param& at(std::size_t i) { return params_.at(i); }
  const Param& at(std::size_t i) const { return params_.at(i); }
  Param& find(const std::string& name);
  const Param& find(const std::string& name) const;
  std::size_t count() const { return params_.size(); }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  // Total number of scalars.
  std::size_t size() const;
  // Allocates (if needed) and clears every gradient.
  void zero_grad();
  bool has_grads() const;
  bool all_finite() const;
  // FNV-1a over the raw value bytes; used to assert a group did not move.
  std::uint64_t value_hash() const;

 private:
  std::string name_;
  std::vector<Param> params_;
};

// Weights uniform in +-sqrt(6/(fan_in+fan_out)).
void init_symmetric_uniform(std::span<double> values, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// y = W x + b
Vector linear_forward(std::span<const double> x, const Matrix& W, std::span<const double> b);

// Same product for a W stored in a Param (rows = outputs).
Vector linear_forward(std::span<const double> x, const Param& W, const Param& b);

// Accumulates W.grad += dy x^T and b.grad += dy. Returns dx = W^T dy when
// want_dx is set, otherwise an empty vector.
Vector linear_backward(std::span<const double> x, std::span<const double> dy, Param& W, Param& b,
                       bool want_dx);

// Backward through y = W x + b where the gradient lands in separate sinks.
// Used when the forward pass ran on adapted weights but the gradient is
// applied to the originals.
Vector linear_backward_into(std::span<const double> x, std::span<const double> dy, const Param& W,
                            Param& W_sink, Param& b_sink, bool want_dx);

struct ReluDropout {
  Vector out;
  // Per-unit multiplier applied after ReLU: 0 when dropped, 1/(1-p) when kept.
  Vector mask;
};

// ReLU then inverted dropout. In eval mode (train == false) the mask is all
// ones and rng is not touched.
ReluDropout relu_dropout_forward(std::span<const double> x, double p, Rng& rng, bool train);

// Gradient through ReLU+dropout given the pre-activation x.
Vector relu_dropout_backward(std::span<const double> x, const Vector& mask, std::span<const double> dy);

struct CrossEntropy {
  double loss = 0.0;
  Vector grad_logits;
};

Vector softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> values);
CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t label);

void apply_sgd(ParamGroup& group, double lr);

struct OptimizerState {
  enum class Kind { sgd, adam };

  Kind kind = Kind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static OptimizerState adam(double lr) {
    OptimizerState s;
    s.kind = Kind::adam;
    s.lr = lr;
    return s;
  }
};

void apply_adam(ParamGroup& group, OptimizerState& state);

// Extends Adam moments with zeros after parameters grew along their row
// dimension (prediction-head growth). Existing moments are kept.
void grow_optimizer_state(OptimizerState& state, const ParamGroup& group);

// Loss closure for gradient checking. When accumulate is true it must add
// its analytic gradient into the groups' grad buffers.
using LossClosure = std::function<double(bool accumulate)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
};

// Central differences over every scalar in groups, compared against the
// analytic gradient. Relative error is |a-n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const LossClosure& loss, std::span<ParamGroup* const> groups,
                           double eps = 1e-4, double floor = 1e-6);

}  // namespace pmr
