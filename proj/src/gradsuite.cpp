#include "pmr/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pmr/error.hpp"
#include "pmr/random.hpp"

namespace pmr {

namespace {

Example random_example(Rng& rng, std::size_t dim, int label, const std::string& id) {
  Example ex;
  ex.id = id;
  ex.label = label;
  const std::size_t nnz = 3 + uniform_index(rng, 4);
  auto idx = sample_without_replacement(rng, dim, nnz);
  std::sort(idx.begin(), idx.end());
  ex.features.dim = dim;
  for (std::size_t i : idx) {
    ex.features.index.push_back(static_cast<std::uint32_t>(i));
    ex.features.value.push_back(uniform(rng, 0.5, 2.0));
  }
  return ex;
}

void jitter(ParamGroup& g, Rng& rng, double scale) {
  for (auto& p : g.params())
    for (double& v : p.value) v += uniform(rng, -scale, scale);
}

// Smallest |pre-activation| over every ReLU unit and every input point.
double kink_margin(const GradInstance& inst) {
  const Param& embed = inst.model.encoder().find("embed");
  const Param& bias = inst.model.encoder().find("bias");
  const Param& W1 = inst.model.proto_head().find("W1");
  const Param& b1 = inst.model.proto_head().find("b1");
  double margin = std::numeric_limits<double>::infinity();
  auto visit = [&](const Example& ex) {
    Vector h(bias.value);
    for (std::size_t k = 0; k < ex.features.nnz(); ++k) {
      for (std::size_t j = 0; j < h.size(); ++j) h[j] += ex.features.value[k] * embed.value[ex.features.index[k] * embed.cols + j];
    }
    for (double& v : h) {
      margin = std::min(margin, std::abs(v));
      v = std::max(v, 0.0);
    }
    for (std::size_t r = 0; r < W1.rows; ++r) {
      double s = b1.value[r];
      for (std::size_t c = 0; c < W1.cols; ++c) s += W1.value[r * W1.cols + c] * h[c];
      margin = std::min(margin, std::abs(s));
    }
  };
  for (const auto& ex : inst.batch) visit(ex);
  for (const auto& ex : inst.episode_items) visit(ex);
  return margin;
}

GradInstance build_instance(std::uint64_t seed, std::uint64_t attempt) {
  Rng rng(derive_seed(seed, "grad-instance", attempt));
  ModelConfig cfg;
  cfg.feature_dim = 8 + uniform_index(rng, 9);
  cfg.embed_dim = 4 + uniform_index(rng, 5);
  cfg.proto_hidden = 4 + uniform_index(rng, 5);
  cfg.proto_dim = 3 + uniform_index(rng, 4);
  cfg.dropout = 0.2;

  GradInstance inst;
  inst.model = PmrModel(cfg, derive_seed(seed, "grad-model"));
  const int classes = 3 + static_cast<int>(uniform_index(rng, 3));
  std::vector<int> labels(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) labels[static_cast<std::size_t>(c)] = c;
  inst.model.register_classes(labels);
  // Zero biases put every unit near its kink; move them off.
  jitter(inst.model.encoder(), rng, 0.3);
  jitter(inst.model.proto_head(), rng, 0.3);
  jitter(inst.model.pred_head(), rng, 0.3);

  const std::size_t batch = 3 + uniform_index(rng, 3);
  for (std::size_t i = 0; i < batch; ++i) {
    inst.batch.push_back(random_example(rng, cfg.feature_dim, static_cast<int>(uniform_index(rng, labels.size())),
                                        "b" + std::to_string(i)));
  }
  for (int c = 0; c < 3; ++c) {
    for (int j = 0; j < 4; ++j) {
      inst.episode_items.push_back(
          random_example(rng, cfg.feature_dim, c, "e" + std::to_string(c) + "_" + std::to_string(j)));
    }
  }
  for (int c = 0; c < 3; ++c) {
    ProtoEpisode::ClassSplit split;
    split.label = c;
    const auto base = static_cast<std::size_t>(c) * 4;
    split.support = {&inst.episode_items[base], &inst.episode_items[base + 1]};
    split.query = {&inst.episode_items[base + 2], &inst.episode_items[base + 3]};
    inst.episode.classes.push_back(std::move(split));
  }
  inst.dropout_seed = derive_seed(seed, "grad-dropout");
  return inst;
}

}  // namespace

GradInstance make_grad_instance(std::uint64_t seed) {
  // Central differences are meaningless across a ReLU kink, so draws with a
  // unit closer than kMargin to zero are redrawn.
  constexpr double kMargin = 1e-2;
  for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
    GradInstance inst = build_instance(seed, attempt);
    if (kink_margin(inst) >= kMargin) return inst;
  }
  throw NumericalError("could not draw a gradient-check instance away from ReLU kinks");
}

std::vector<GradSuiteEntry> gradient_suite(std::size_t instances, std::uint64_t seed, double eps) {
  std::vector<GradSuiteEntry> out(4);
  out[0].loss = "cross_entropy";
  out[1].loss = "prototypical";
  out[2].loss = "inner";
  out[3].loss = "outer";
  auto record = [](GradSuiteEntry& e, const GradCheckResult& r) {
    ++e.instances;
    if (r.max_relative_error >= e.max_relative_error) {
      e.max_relative_error = r.max_relative_error;
      e.worst_param = r.worst_param;
    }
  };
  for (std::size_t t = 0; t < instances; ++t) {
    GradInstance inst = make_grad_instance(derive_seed(seed, "suite", t));
    PmrModel& m = inst.model;

    {
      ParamGroup* groups[] = {&m.encoder(), &m.pred_head()};
      record(out[0], grad_check([&](bool acc) { return m.task_ce_loss(inst.batch, acc); }, groups, eps));
    }
    {
      ParamGroup* groups[] = {&m.proto_head()};
      record(out[1], grad_check(
                         [&](bool acc) {
                           Rng r(inst.dropout_seed);
                           return m.proto_loss(inst.episode, acc, &r);
                         },
                         groups, eps));
    }
    {
      ParamGroup* groups[] = {&m.proto_head(), &m.pred_head()};
      record(out[2], grad_check(
                         [&](bool acc) {
                           Rng r(inst.dropout_seed);
                           return m.inner_loss(inst.batch, inst.episode, acc, &r).total();
                         },
                         groups, eps));
    }
    {
      // The head being perturbed is the adapted head itself, so the check
      // covers both the encoder gradient and the gradient at w'.
      ParamGroup* groups[] = {&m.encoder(), &m.pred_head()};
      record(out[3], grad_check(
                         [&](bool acc) {
                           const ParamGroup adapted = m.pred_head();
                           return m.outer_objective(inst.batch, adapted, acc);
                         },
                         groups, eps));
    }
  }
  return out;
}

}  // namespace pmr
