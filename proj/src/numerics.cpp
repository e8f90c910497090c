#include "pmr/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "pmr/error.hpp"
#include "pmr/kernels.hpp"

namespace pmr {

Vector SparseVector::to_dense() const {
  Vector out(dim, 0.0);
  for (std::size_t k = 0; k < index.size(); ++k) out[index[k]] += value[k];
  return out;
}

Param& ParamGroup::add(std::string name, std::size_t rows, std::size_t cols) {
  Param p;
  p.name = std::move(name);
  p.rows = rows;
  p.cols = cols;
  p.value.assign(rows * cols, 0.0);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamGroup::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw StateError("parameter '" + name + "' not in group '" + name_ + "'");
}

const Param& ParamGroup::find(const std::string& name) const {
  return const_cast<ParamGroup*>(this)->find(name);
}

std::size_t ParamGroup::size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ParamGroup::zero_grad() {
  for (auto& p : params_) p.grad.assign(p.value.size(), 0.0);
}

bool ParamGroup::has_grads() const {
  return std::all_of(params_.begin(), params_.end(),
                     [](const Param& p) { return p.grad.size() == p.value.size(); });
}

bool ParamGroup::all_finite() const {
  for (const auto& p : params_) {
    for (double x : p.value)
      if (!std::isfinite(x)) return false;
    for (double x : p.grad)
      if (!std::isfinite(x)) return false;
  }
  return true;
}

std::uint64_t ParamGroup::value_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    for (double x : p.value) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &x, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

void init_symmetric_uniform(std::span<double> values, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : values) x = uniform(rng, -limit, limit);
}

Vector linear_forward(std::span<const double> x, const Matrix& W, std::span<const double> b) {
  if (W.cols != x.size() || W.rows != b.size()) {
    throw ConfigError("linear_forward: W is " + std::to_string(W.rows) + "x" + std::to_string(W.cols) +
                      ", x has " + std::to_string(x.size()) + ", b has " + std::to_string(b.size()));
  }
  Vector y(W.rows);
  for (std::size_t r = 0; r < W.rows; ++r) y[r] = kernels::dot(W.row(r).data(), x.data(), W.cols) + b[r];
  return y;
}

Vector linear_forward(std::span<const double> x, const Param& W, const Param& b) {
  if (W.cols != x.size() || W.rows != b.size()) {
    throw ConfigError("linear_forward: parameter '" + W.name + "' expects input " + std::to_string(W.cols) +
                      ", got " + std::to_string(x.size()));
  }
  Vector y(W.rows);
  for (std::size_t r = 0; r < W.rows; ++r) y[r] = kernels::dot(W.value_row(r).data(), x.data(), W.cols) + b.value[r];
  return y;
}

Vector linear_backward(std::span<const double> x, std::span<const double> dy, Param& W, Param& b, bool want_dx) {
  return linear_backward_into(x, dy, W, W, b, want_dx);
}

Vector linear_backward_into(std::span<const double> x, std::span<const double> dy, const Param& W,
                            Param& W_sink, Param& b_sink, bool want_dx) {
  if (W_sink.grad.size() != W.size() || b_sink.grad.size() != W.rows) {
    throw StateError("linear_backward: gradients not allocated for " + W.name);
  }
  for (std::size_t r = 0; r < W.rows; ++r) {
    if (dy[r] == 0.0) continue;
    kernels::axpy(dy[r], x.data(), W_sink.grad_row(r).data(), W.cols);
    b_sink.grad[r] += dy[r];
  }
  Vector dx;
  if (want_dx) {
    dx.assign(W.cols, 0.0);
    for (std::size_t r = 0; r < W.rows; ++r) {
      if (dy[r] == 0.0) continue;
      kernels::axpy(dy[r], W.value_row(r).data(), dx.data(), W.cols);
    }
  }
  return dx;
}

ReluDropout relu_dropout_forward(std::span<const double> x, double p, Rng& rng, bool train) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(p));
  ReluDropout r;
  r.out.resize(x.size());
  r.mask.assign(x.size(), 1.0);
  if (train && p > 0.0) {
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& m : r.mask) m = uniform01(rng) < p ? 0.0 : keep_scale;
  }
  for (std::size_t i = 0; i < x.size(); ++i) r.out[i] = (x[i] > 0.0 ? x[i] : 0.0) * r.mask[i];
  return r;
}

Vector relu_dropout_backward(std::span<const double> x, const Vector& mask, std::span<const double> dy) {
  Vector dx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] * mask[i] : 0.0;
  return dx;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

Vector softmax(std::span<const double> logits) {
  Vector p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    s += p[i];
  }
  for (double& x : p) x /= s;
  return p;
}

CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw InputError("label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) +
                     " logits");
  }
  CrossEntropy ce;
  ce.loss = log_sum_exp(logits) - logits[label];
  ce.grad_logits = softmax(logits);
  ce.grad_logits[label] -= 1.0;
  return ce;
}

void apply_sgd(ParamGroup& group, double lr) {
  if (!group.has_grads()) throw StateError("apply_sgd: group '" + group.name() + "' has no gradients");
  for (auto& p : group.params()) kernels::axpy(-lr, p.grad.data(), p.value.data(), p.size());
}

void apply_adam(ParamGroup& group, OptimizerState& state) {
  if (state.kind != OptimizerState::Kind::adam) throw StateError("apply_adam: optimizer state is not adam");
  if (!group.has_grads()) throw StateError("apply_adam: group '" + group.name() + "' has no gradients");
  auto& params = group.params();
  if (state.m.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw StateError("apply_adam: parameter count changed since last step");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].size()) {
      throw StateError("apply_adam: shape of '" + params[i].name + "' changed since last step");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const kernels::AdamCoefficients c{state.lr, state.beta1, state.beta2, state.eps,
                                    1.0 - std::pow(state.beta1, t), 1.0 - std::pow(state.beta2, t)};
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    kernels::adam_update(p.value.data(), p.grad.data(), state.m[i].data(), state.v[i].data(), p.size(), c);
  }
}

void grow_optimizer_state(OptimizerState& state, const ParamGroup& group) {
  if (state.m.empty()) return;
  const auto& params = group.params();
  if (state.m.size() != params.size()) throw StateError("grow_optimizer_state: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() > params[i].size()) throw StateError("grow_optimizer_state: parameters shrank");
    state.m[i].resize(params[i].size(), 0.0);
    state.v[i].resize(params[i].size(), 0.0);
  }
}

GradCheckResult grad_check(const LossClosure& loss, std::span<ParamGroup* const> groups, double eps, double floor) {
  GradCheckResult result;
  for (ParamGroup* g : groups) g->zero_grad();
  const double base = loss(true);
  if (!std::isfinite(base)) throw NumericalError("grad_check: loss is not finite");

  // Snapshot the analytic gradients; the closure may touch grads again.
  std::vector<std::vector<std::vector<double>>> analytic;
  for (ParamGroup* g : groups) {
    auto& per_group = analytic.emplace_back();
    for (const auto& p : g->params()) per_group.push_back(p.grad);
  }

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    auto& params = groups[gi]->params();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      for (std::size_t k = 0; k < params[pi].size(); ++k) {
        double& x = params[pi].value[k];
        const double saved = x;
        x = saved + eps;
        const double up = loss(false);
        x = saved - eps;
        const double down = loss(false);
        x = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) throw NumericalError("grad_check: loss is not finite");
        const double numeric = (up - down) / (2.0 * eps);
        const double a = analytic[gi][pi][k];
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        const double rel = std::abs(a - numeric) / denom;
        ++result.coordinates;
        if (rel > result.max_relative_error) {
          result.max_relative_error = rel;
          result.worst_param = groups[gi]->name() + "/" + params[pi].name;
        }
      }
    }
  }
  // Leave the analytic gradient in place for the caller.
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    auto& params = groups[gi]->params();
    for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi].grad = analytic[gi][pi];
  }
  return result;
}

}  // namespace pmr
