#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pmr/distance.hpp"
#include "pmr/example.hpp"
#include "pmr/numerics.hpp"
#include "pmr/random.hpp"

namespace pmr {

struct ModelConfig {
  std::size_t feature_dim = 4096;  // hashed bag-of-words width
  std::size_t embed_dim = 64;      // encoder output d
  std::size_t proto_hidden = 64;   // prototype head hidden width
  std::size_t proto_dim = 32;      // prototype space M
  double dropout = 0.2;            // prototype head only
  DistanceKind distance = DistanceKind::squared_euclidean;

  std::string canonical() const;
  std::uint64_t hash() const;
};

// Support/query split of one prototypical episode. Pointers refer into the
// episode's support batches and must not outlive them.
struct ProtoEpisode {
  struct ClassSplit {
    int label = -1;
    std::vector<const Example*> support;
    std::vector<const Example*> query;
  };
  std::vector<ClassSplit> classes;

  std::size_t query_count() const;
};

// Negative log-probability of each query's class under a softmax over
// negative distances to all prototypes, averaged over queries.
struct PrototypicalNll {
  double loss = 0.0;
  std::vector<Vector> grad_queries;     // one per query embedding
  std::vector<Vector> grad_prototypes;  // one per prototype
  std::vector<Vector> posteriors;       // class posterior per query
};

PrototypicalNll prototypical_nll(std::span<const Vector> queries, std::span<const std::size_t> query_class,
                                 std::span<const Vector> prototypes, DistanceKind kind);

struct InnerLoss {
  double proto = 0.0;  // prototypical loss on the episode's query points
  double task = 0.0;   // cross-entropy on the support batches
  double total() const { return proto + task; }
};

// Which groups receive gradients from task_ce_loss.
struct GradTargets {
  bool encoder = true;
  bool head = true;
};

// Encoder (linear embed over hashed features + ReLU), prototype head
// (d -> hidden -> M with ReLU and dropout) and prediction head (d -> N).
class PmrModel {
 public:
  PmrModel() = default;
  PmrModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  ParamGroup& encoder() { return encoder_; }
  ParamGroup& proto_head() { return proto_; }
  ParamGroup& pred_head() { return pred_; }
  const ParamGroup& encoder() const { return encoder_; }
  const ParamGroup& proto_head() const { return proto_; }
  const ParamGroup& pred_head() const { return pred_; }

  std::size_t num_classes() const { return pred_.at(1).size(); }
  std::size_t parameter_count() const;

  // Grows the prediction head so every label is a valid row. Global ids are
  // dense, so N becomes max(N, max label + 1). Existing rows are untouched.
  void register_classes(std::span<const int> labels);

  Vector encode(const SparseVector& x) const;
  Vector predict_logits(const SparseVector& x) const;
  Vector predict_logits_with(const SparseVector& x, const ParamGroup& head) const;
  std::size_t predict(const SparseVector& x) const;
  std::size_t predict_with(const SparseVector& x, const ParamGroup& head) const;

  // Prototype-space embedding. Dropout is applied only when rng is given.
  Vector proto_embed(const SparseVector& x, Rng* dropout_rng = nullptr) const;

  void zero_grad();

  // Mean cross-entropy over the batch. Gradients are added to the selected
  // groups when accumulate is set.
  double task_ce_loss(std::span<const Example> batch, bool accumulate, GradTargets targets = {});

  // Prototypical loss over an episode. Prototypes are the mean support
  // embeddings, so gradients reach the prototype head through both query
  // points and prototypes. The encoder is treated as fixed.
  double proto_loss(const ProtoEpisode& episode, bool accumulate, Rng* dropout_rng = nullptr);

  // Prototypical loss plus cross-entropy on the support batches. The task
  // term only feeds the prediction head.
  InnerLoss inner_loss(std::span<const Example> support, const ProtoEpisode& episode, bool accumulate,
                       Rng* dropout_rng = nullptr);

  // Cross-entropy on the query batch evaluated with the adapted prediction
  // head. First-order: the gradient at the adapted head is added to this
  // model's prediction head, and the encoder gradient is taken at the
  // current encoder.
  double outer_objective(std::span<const Example> query, const ParamGroup& adapted_head, bool accumulate);

 private:
  struct EncoderTrace {
    Vector pre;
    Vector out;
  };
  struct ProtoTrace {
    Vector input;
    Vector hidden_pre;
    ReluDropout hidden;
    Vector out;
  };

  EncoderTrace encode_trace(const SparseVector& x) const;
  void encoder_backward(const SparseVector& x, const EncoderTrace& trace, std::span<const double> dout);
  ProtoTrace proto_trace(const SparseVector& x, Rng* dropout_rng) const;
  void proto_backward(const ProtoTrace& trace, std::span<const double> dout);
  double ce_with_head(std::span<const Example> batch, const ParamGroup& head, bool accumulate, bool encoder_grads,
                      bool head_grads);
  void check_features(const SparseVector& x) const;

  ModelConfig config_;
  ParamGroup encoder_{"phi_e"};
  ParamGroup proto_{"phi_proto"};
  ParamGroup pred_{"w"};
  Rng init_rng_;

  friend struct CheckpointAccess;
};

}  // namespace pmr
