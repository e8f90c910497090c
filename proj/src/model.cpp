#include "pmr/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pmr/error.hpp"
#include "pmr/kernels.hpp"

namespace pmr {

std::string_view distance_name(DistanceKind kind) {
  return kind == DistanceKind::squared_euclidean ? "squared_euclidean" : "euclidean";
}

DistanceKind parse_distance(std::string_view name) {
  if (name == "squared_euclidean" || name == "squared") return DistanceKind::squared_euclidean;
  if (name == "euclidean") return DistanceKind::euclidean;
  throw ConfigError("unknown distance '" + std::string(name) + "'");
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os << "feature_dim=" << feature_dim << ";embed_dim=" << embed_dim << ";proto_hidden=" << proto_hidden
     << ";proto_dim=" << proto_dim << ";dropout=" << dropout << ";distance=" << distance_name(distance);
  return os.str();
}

std::uint64_t ModelConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : canonical()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t ProtoEpisode::query_count() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.query.size();
  return n;
}

PrototypicalNll prototypical_nll(std::span<const Vector> queries, std::span<const std::size_t> query_class,
                                 std::span<const Vector> prototypes, DistanceKind kind) {
  PrototypicalNll out;
  out.grad_prototypes.assign(prototypes.size(), Vector());
  for (std::size_t l = 0; l < prototypes.size(); ++l) out.grad_prototypes[l].assign(prototypes[l].size(), 0.0);
  if (queries.empty()) return out;

  const double scale = 1.0 / static_cast<double>(queries.size());
  Vector neg_dist(prototypes.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const std::size_t y = query_class[q];
    if (y >= prototypes.size()) {
      throw StateError("prototypical loss: no prototype for query class index " + std::to_string(y));
    }
    for (std::size_t l = 0; l < prototypes.size(); ++l) neg_dist[l] = -distance(queries[q], prototypes[l], kind);
    out.loss += scale * (-neg_dist[y] + log_sum_exp(neg_dist));

    Vector post = softmax(neg_dist);
    Vector gq(queries[q].size(), 0.0);
    for (std::size_t l = 0; l < prototypes.size(); ++l) {
      // dL/dd_l for this query.
      const double coef = scale * ((l == y ? 1.0 : 0.0) - post[l]);
      if (coef == 0.0) continue;
      const Vector dd = distance_grad(queries[q], prototypes[l], kind);
      for (std::size_t j = 0; j < gq.size(); ++j) {
        gq[j] += coef * dd[j];
        out.grad_prototypes[l][j] -= coef * dd[j];
      }
    }
    out.grad_queries.push_back(std::move(gq));
    out.posteriors.push_back(std::move(post));
  }
  return out;
}

PmrModel::PmrModel(const ModelConfig& config, std::uint64_t seed) : config_(config), init_rng_(seed) {
  if (config.feature_dim == 0 || config.embed_dim == 0 || config.proto_hidden == 0 || config.proto_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");

  const std::size_t D = config.feature_dim, d = config.embed_dim, H = config.proto_hidden, M = config.proto_dim;
  encoder_.add("embed", D, d);
  encoder_.add("bias", d, 1);
  init_symmetric_uniform(encoder_.at(0).value, D, d, init_rng_);

  proto_.add("W1", H, d);
  proto_.add("b1", H, 1);
  proto_.add("W2", M, H);
  proto_.add("b2", M, 1);
  init_symmetric_uniform(proto_.at(0).value, d, H, init_rng_);
  init_symmetric_uniform(proto_.at(2).value, H, M, init_rng_);

  pred_.add("W", 0, d);
  pred_.add("b", 0, 1);
}

std::size_t PmrModel::parameter_count() const { return encoder_.size() + proto_.size() + pred_.size(); }

void PmrModel::register_classes(std::span<const int> labels) {
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw InputError("class ids must be non-negative");
    max_label = std::max(max_label, l);
  }
  const std::size_t wanted = static_cast<std::size_t>(max_label + 1);
  const std::size_t current = num_classes();
  if (wanted <= current) return;

  auto& W = pred_.at(0);
  auto& b = pred_.at(1);
  const std::size_t d = config_.embed_dim;
  W.value.resize(wanted * d, 0.0);
  W.rows = wanted;
  b.value.resize(wanted, 0.0);
  b.rows = wanted;
  init_symmetric_uniform(std::span<double>(W.value).subspan(current * d), d, wanted, init_rng_);
  if (!W.grad.empty()) W.grad.resize(W.value.size(), 0.0);
  if (!b.grad.empty()) b.grad.resize(b.value.size(), 0.0);
}

void PmrModel::check_features(const SparseVector& x) const {
  if (x.dim != config_.feature_dim) {
    throw InputError("feature dimension " + std::to_string(x.dim) + " does not match the model's " +
                     std::to_string(config_.feature_dim));
  }
}

PmrModel::EncoderTrace PmrModel::encode_trace(const SparseVector& x) const {
  check_features(x);
  const auto& embed = encoder_.at(0);
  const auto& bias = encoder_.at(1);
  EncoderTrace t;
  t.pre = bias.value;
  for (std::size_t k = 0; k < x.nnz(); ++k) {
    kernels::axpy(x.value[k], embed.value_row(x.index[k]).data(), t.pre.data(), t.pre.size());
  }
  t.out.resize(t.pre.size());
  for (std::size_t i = 0; i < t.pre.size(); ++i) t.out[i] = t.pre[i] > 0.0 ? t.pre[i] : 0.0;
  return t;
}

void PmrModel::encoder_backward(const SparseVector& x, const EncoderTrace& trace, std::span<const double> dout) {
  auto& embed = encoder_.at(0);
  auto& bias = encoder_.at(1);
  Vector dpre(dout.size());
  for (std::size_t i = 0; i < dout.size(); ++i) dpre[i] = trace.pre[i] > 0.0 ? dout[i] : 0.0;
  for (std::size_t k = 0; k < x.nnz(); ++k) {
    kernels::axpy(x.value[k], dpre.data(), embed.grad_row(x.index[k]).data(), dpre.size());
  }
  kernels::axpy(1.0, dpre.data(), bias.grad.data(), dpre.size());
}

Vector PmrModel::encode(const SparseVector& x) const { return encode_trace(x).out; }

Vector PmrModel::predict_logits(const SparseVector& x) const { return predict_logits_with(x, pred_); }

Vector PmrModel::predict_logits_with(const SparseVector& x, const ParamGroup& head) const {
  if (head.at(1).size() == 0) throw StateError("predict_logits: no classes registered");
  return linear_forward(encode(x), head.at(0), head.at(1));
}

std::size_t PmrModel::predict(const SparseVector& x) const { return predict_with(x, pred_); }

std::size_t PmrModel::predict_with(const SparseVector& x, const ParamGroup& head) const {
  const Vector logits = predict_logits_with(x, head);
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

PmrModel::ProtoTrace PmrModel::proto_trace(const SparseVector& x, Rng* dropout_rng) const {
  ProtoTrace t;
  t.input = encode(x);
  t.hidden_pre = linear_forward(t.input, proto_.at(0), proto_.at(1));
  Rng unused;
  const bool train = dropout_rng != nullptr;
  t.hidden = relu_dropout_forward(t.hidden_pre, config_.dropout, train ? *dropout_rng : unused, train);
  t.out = linear_forward(t.hidden.out, proto_.at(2), proto_.at(3));
  return t;
}

void PmrModel::proto_backward(const ProtoTrace& trace, std::span<const double> dout) {
  const Vector dhidden = linear_backward(trace.hidden.out, dout, proto_.at(2), proto_.at(3), true);
  const Vector dpre = relu_dropout_backward(trace.hidden_pre, trace.hidden.mask, dhidden);
  linear_backward(trace.input, dpre, proto_.at(0), proto_.at(1), false);
}

Vector PmrModel::proto_embed(const SparseVector& x, Rng* dropout_rng) const {
  return proto_trace(x, dropout_rng).out;
}

void PmrModel::zero_grad() {
  encoder_.zero_grad();
  proto_.zero_grad();
  pred_.zero_grad();
}

double PmrModel::ce_with_head(std::span<const Example> batch, const ParamGroup& head, bool accumulate,
                              bool encoder_grads, bool head_grads) {
  if (batch.empty()) throw InputError("cross-entropy over an empty batch");
  const std::size_t n_classes = head.at(1).size();
  if (n_classes == 0) throw StateError("cross-entropy: no classes registered");
  if (accumulate) {
    if (encoder_grads && !encoder_.has_grads()) encoder_.zero_grad();
    if (head_grads && !pred_.has_grads()) pred_.zero_grad();
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const Example& ex : batch) {
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= n_classes) {
      throw InputError("example '" + ex.id + "' has unregistered label " + std::to_string(ex.label));
    }
    const EncoderTrace enc = encode_trace(ex.features);
    const Vector logits = linear_forward(enc.out, head.at(0), head.at(1));
    CrossEntropy ce = softmax_cross_entropy(logits, static_cast<std::size_t>(ex.label));
    total += ce.loss;
    if (!accumulate || !(encoder_grads || head_grads)) continue;
    for (double& g : ce.grad_logits) g *= scale;
    if (head_grads) {
      const Vector dh = linear_backward_into(enc.out, ce.grad_logits, head.at(0), pred_.at(0), pred_.at(1),
                                             encoder_grads);
      if (encoder_grads) encoder_backward(ex.features, enc, dh);
    } else {
      // Encoder-only gradient: dh = W^T dlogits without touching head grads.
      Vector dh(enc.out.size(), 0.0);
      const auto& W = head.at(0);
      for (std::size_t r = 0; r < W.rows; ++r) kernels::axpy(ce.grad_logits[r], W.value_row(r).data(), dh.data(), dh.size());
      encoder_backward(ex.features, enc, dh);
    }
  }
  return total * scale;
}

double PmrModel::task_ce_loss(std::span<const Example> batch, bool accumulate, GradTargets targets) {
  return ce_with_head(batch, pred_, accumulate, targets.encoder, targets.head);
}

double PmrModel::proto_loss(const ProtoEpisode& episode, bool accumulate, Rng* dropout_rng) {
  if (accumulate && !proto_.has_grads()) proto_.zero_grad();

  std::vector<Vector> prototypes;
  std::vector<std::vector<ProtoTrace>> support_traces;
  std::vector<ProtoTrace> query_traces;
  std::vector<Vector> queries;
  std::vector<std::size_t> query_class;

  for (const auto& split : episode.classes) {
    if (split.support.empty()) {
      if (!split.query.empty()) {
        throw StateError("prototypical loss: class " + std::to_string(split.label) + " has queries but no prototype");
      }
      continue;
    }
    auto& traces = support_traces.emplace_back();
    Vector proto(config_.proto_dim, 0.0);
    for (const Example* ex : split.support) {
      traces.push_back(proto_trace(ex->features, dropout_rng));
      kernels::axpy(1.0, traces.back().out.data(), proto.data(), proto.size());
    }
    for (double& x : proto) x /= static_cast<double>(split.support.size());
    const std::size_t class_index = prototypes.size();
    prototypes.push_back(std::move(proto));
    for (const Example* ex : split.query) {
      query_traces.push_back(proto_trace(ex->features, dropout_rng));
      queries.push_back(query_traces.back().out);
      query_class.push_back(class_index);
    }
  }
  if (queries.empty()) return 0.0;

  const PrototypicalNll nll = prototypical_nll(queries, query_class, prototypes, config_.distance);
  if (accumulate) {
    for (std::size_t q = 0; q < query_traces.size(); ++q) proto_backward(query_traces[q], nll.grad_queries[q]);
    for (std::size_t c = 0; c < support_traces.size(); ++c) {
      Vector per_support = nll.grad_prototypes[c];
      for (double& g : per_support) g /= static_cast<double>(support_traces[c].size());
      for (const auto& trace : support_traces[c]) proto_backward(trace, per_support);
    }
  }
  return nll.loss;
}

InnerLoss PmrModel::inner_loss(std::span<const Example> support, const ProtoEpisode& episode, bool accumulate,
                               Rng* dropout_rng) {
  if (support.empty()) throw InputError("inner loss: empty support set");
  InnerLoss out;
  out.proto = proto_loss(episode, accumulate, dropout_rng);
  out.task = task_ce_loss(support, accumulate, GradTargets{.encoder = false, .head = true});
  return out;
}

double PmrModel::outer_objective(std::span<const Example> query, const ParamGroup& adapted_head, bool accumulate) {
  if (query.empty()) throw InputError("outer objective: empty query set");
  if (adapted_head.at(1).size() != num_classes()) {
    throw StateError("outer objective: adapted head has a different class count");
  }
  return ce_with_head(query, adapted_head, accumulate, true, true);
}

}  // namespace pmr
