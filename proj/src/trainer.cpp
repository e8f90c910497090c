#include "pmr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pmr/error.hpp"
#include "pmr/kernels.hpp"
#include "pmr/log.hpp"

namespace pmr {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::pmr:
      return "pmr";
    case Method::sequential:
      return "sequential";
    case Method::random_replay:
      return "random_replay";
    case Method::agem:
      return "agem";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::pmr, Method::sequential, Method::random_replay, Method::agem}) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) + "' (pmr, sequential, random_replay, agem)");
}

std::string_view inner_schedule_name(InnerSchedule s) { return s == InnerSchedule::full ? "full" : "per_batch"; }

InnerSchedule parse_inner_schedule(std::string_view name) {
  if (name == "full") return InnerSchedule::full;
  if (name == "per_batch") return InnerSchedule::per_batch;
  throw ConfigError("unknown inner schedule '" + std::string(name) + "' (full, per_batch)");
}

void RunConfig::validate() const {
  auto finite_nonneg = [](double v, const char* key) {
    if (!(std::isfinite(v) && v >= 0.0)) throw ConfigError(std::string(key) + " must be a finite non-negative rate");
  };
  finite_nonneg(inner_lr, "inner_lr");
  finite_nonneg(outer_lr, "outer_lr");
  if (inference_lr) finite_nonneg(*inference_lr, "inference_lr");
  auto positive = [](std::size_t v, const char* key) {
    if (v == 0) throw ConfigError(std::string(key) + " must be positive");
  };
  positive(support_batches, "support_batches");
  positive(replay_period, "replay.period");
  positive(per_class_cap, "memory.per_class");
  positive(memory_budget, "memory.budget");
  positive(n_support, "n_support");
  positive(n_query, "n_query");
  positive(per_class_batch, "per_class_batch");
  if (target_rate && !(std::isfinite(*target_rate) && *target_rate > 0.0)) {
    throw ConfigError("replay.target_rate must be a positive percentage");
  }
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw ConfigError("model.dropout must be in [0, 1)");
  if (model.feature_dim == 0 || model.embed_dim == 0 || model.proto_hidden == 0 || model.proto_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = {
      {"method", method_name(method)},
      {"strategy", strategy_name(strategy)},
      {"order", order_id},
      {"seed", seed},
      {"inner_lr", inner_lr},
      {"outer_lr", outer_lr},
      {"inference_lr", inference_lr ? nlohmann::json(*inference_lr) : nlohmann::json(nullptr)},
      {"support_batches", support_batches},
      {"per_class_batch", per_class_batch},
      {"n_support", n_support},
      {"n_query", n_query},
      {"inner_schedule", inner_schedule_name(inner_schedule)},
      {"inner_w_only", inner_w_only},
      {"replay", {{"period", replay_period}, {"target_rate", target_rate ? nlohmann::json(*target_rate) : nlohmann::json(nullptr)}}},
      {"memory", {{"per_class", per_class_cap}, {"budget", memory_budget}}},
      {"model",
       {{"feature_dim", model.feature_dim},
        {"embed_dim", model.embed_dim},
        {"proto_hidden", model.proto_hidden},
        {"proto_dim", model.proto_dim},
        {"dropout", model.dropout},
        {"distance", distance_name(model.distance)}}},
  };
  return j;
}

nlohmann::json EpisodeRecord::to_json() const {
  return {{"task", task},
          {"task_name", task_name},
          {"i", index},
          {"replay", replay},
          {"L_i", inner_task},
          {"L_P", inner_proto},
          {"J", outer},
          {"memory", memory_size},
          {"outliers", outlier_size},
          {"consumed", consumed},
          {"memory_reads", memory_reads}};
}

nlohmann::json TaskSummary::to_json() const {
  return {{"name", name},
          {"batch_size", batch_size},
          {"period", period},
          {"episodes", episodes},
          {"replays", replays},
          {"consumed", consumed},
          {"registered_classes", registered_classes},
          {"expected_rate", expected_rate},
          {"observed_rate", observed_rate}};
}

nlohmann::json RunResult::to_json() const {
  nlohmann::json tasks_json = nlohmann::json::array();
  for (const auto& t : tasks) tasks_json.push_back(t.to_json());
  nlohmann::json j = {{"matrix", matrix.to_json()},
                      {"acc", matrix.num_tasks() ? nlohmann::json(acc(matrix)) : nlohmann::json(nullptr)},
                      {"tasks", tasks_json},
                      {"stream_consumed", ledger.stream.size()},
                      {"memory_reads", ledger.memory_reads},
                      {"warnings", warnings}};
  return j;
}

Trainer::Trainer(const RunConfig& config, std::vector<TaskData> ordered_tasks)
    : config_(config),
      stream_([&] {
        config.validate();
        LabelRegistry registry;
        for (std::size_t k = 0; k < ordered_tasks.size(); ++k) {
          registry.register_task(ordered_tasks[k]);
          for (auto& ex : ordered_tasks[k].train) ex.task = static_cast<int>(k);
          for (auto& ex : ordered_tasks[k].test) ex.task = static_cast<int>(k);
        }
        const std::size_t classes = registry.size();
        if (config.memory_budget < config.per_class_cap * classes) {
          log::warn("memory budget " + std::to_string(config.memory_budget) + " is below n * classes = " +
                    std::to_string(config.per_class_cap * classes) + "; later classes get fewer slots");
        }
        return TaskStream(std::move(ordered_tasks), config.per_class_batch, derive_seed(config.seed, "stream"));
      }()),
      model_(config.model, derive_seed(config.seed, "model")),
      memory_(config.per_class_cap, config.memory_budget, config.model.distance),
      adam_encoder_(OptimizerState::adam(config.outer_lr)),
      adam_proto_(OptimizerState::adam(config.outer_lr)),
      adam_head_(OptimizerState::adam(config.outer_lr)),
      dropout_rng_(derive_seed(config.seed, "dropout")),
      memory_rng_(derive_seed(config.seed, "memory")),
      infer_rng_(derive_seed(config.seed, "inference")) {
  if (stream_.num_tasks() == 0) throw ConfigError("no tasks to train");
  std::vector<std::string> names;
  for (const auto& t : stream_.tasks()) names.push_back(t.name);
  matrix_ = AccuracyMatrix(std::move(names));
}

void Trainer::begin_task(std::size_t k) {
  if (in_task_) throw StateError("begin_task: task " + std::to_string(task_) + " still open");
  task_ = k;
  in_task_ = true;
  episode_ = 0;
  const TaskData& t = stream_.task(k);
  model_.register_classes(t.global_ids);
  grow_optimizer_state(adam_head_, model_.pred_head());
  for (int id : t.global_ids) registered_ = std::max(registered_, static_cast<std::size_t>(id) + 1);
  batch_size_ = stream_.batch_size(k);
  const std::size_t stored = std::min(config_.per_class_cap * registered_, config_.memory_budget);
  period_ = config_.target_rate
                ? rate_matched_period(*config_.target_rate, stored, batch_size_, config_.support_batches)
                : config_.replay_period;
  TaskSummary s;
  s.name = t.name;
  s.batch_size = batch_size_;
  s.period = period_;
  s.registered_classes = registered_;
  s.expected_rate = replay_rate(stored, batch_size_, config_.support_batches, period_);
  summaries_.push_back(s);
}

Embedder Trainer::embedder() const {
  return [this](const Example& ex) { return model_.proto_embed(ex.features); };
}

EpisodeRecord Trainer::new_record(bool replay) const {
  EpisodeRecord r;
  r.task = task_;
  r.task_name = stream_.task(task_).name;
  r.index = episode_;
  r.replay = replay;
  return r;
}

std::optional<EpisodeRecord> Trainer::train_episode() {
  if (!in_task_) throw StateError("train_episode: no task open");
  std::optional<EpisodeRecord> rec;
  switch (config_.method) {
    case Method::pmr:
    case Method::random_replay:
      rec = pmr_episode();
      break;
    case Method::sequential:
      rec = sequential_step();
      break;
    case Method::agem:
      rec = agem_step();
      break;
  }
  if (!rec) return rec;
  rec->memory_size = memory_.size();
  rec->outlier_size = memory_.outlier_size();
  auto& s = summaries_.back();
  ++s.episodes;
  if (rec->replay) ++s.replays;
  s.consumed += rec->consumed;
  episodes_.push_back(*rec);
  return rec;
}

std::optional<EpisodeRecord> Trainer::pmr_episode() {
  const bool use_proto = config_.method == Method::pmr;
  const StrategyKind strategy = use_proto ? config_.strategy : StrategyKind::random;
  ++episode_;

  // Support: m full batches. A short stream ends the task.
  std::vector<std::vector<Example>> batches;
  std::size_t drawn = 0;
  for (std::size_t j = 0; j < config_.support_batches; ++j) {
    auto b = stream_.next_batch(task_);
    if (!b) return std::nullopt;
    drawn += b->size();
    const bool full = b->size() == batch_size_;
    batches.push_back(std::move(*b));
    if (!full) return std::nullopt;
  }
  std::vector<Example> support;
  support.reserve(drawn);
  for (const auto& b : batches)
    for (const auto& ex : b) support.push_back(ex);

  // Prototypical split per class: the first n_support support items build
  // the prototype, the next n_query are its query points.
  ProtoEpisode episode;
  if (use_proto) {
    std::map<int, std::vector<const Example*>> by_class;
    for (const auto& ex : support) by_class[ex.label].push_back(&ex);
    for (const auto& [label, items] : by_class) {
      ProtoEpisode::ClassSplit split;
      split.label = label;
      // A lone example still gives the class a prototype, just no query.
      const std::size_t ns = items.size() == 1 ? 1 : std::min(config_.n_support, items.size() - 1);
      const std::size_t nq = std::min(config_.n_query, items.size() - ns);
      split.support.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(ns));
      split.query.assign(items.begin() + static_cast<std::ptrdiff_t>(ns),
                         items.begin() + static_cast<std::ptrdiff_t>(ns + nq));
      memory_.prototypes().set(
          compute_prototype(label, split.support, model_, static_cast<std::int64_t>(episode_)));
      episode.classes.push_back(std::move(split));
    }
  }

  bool replay = replay_due(episode_, period_);
  if (replay && memory_.empty()) {
    log::warn("replay due at episode " + std::to_string(episode_) + " of task '" + stream_.task(task_).name +
              "' but memory is empty; using a stream batch");
    replay = false;
  }

  EpisodeRecord rec = new_record(replay);
  std::vector<Example> query;
  if (replay) {
    query = memory_.read_all();
    ledger_.memory_reads += query.size();
    for (const auto& ex : query) ledger_.memory_ids.push_back(ex.id);
    rec.memory_reads = query.size();
  } else {
    auto q = stream_.next_batch(task_);
    if (!q) return std::nullopt;
    drawn += q->size();
    if (q->size() != batch_size_) return std::nullopt;
    query = std::move(*q);
    select_and_write(strategy, memory_, candidate_pool(strategy, support, query), embedder(),
                     config_.per_class_cap, memory_rng_);
  }
  rec.consumed = drawn;

  // Inner loop: SGD on w (and the prototype head) from the support set.
  const ParamGroup w_before = model_.pred_head();
  const bool step_proto = use_proto && !config_.inner_w_only;
  const ProtoEpisode empty_episode;
  const ProtoEpisode& ep = use_proto ? episode : empty_episode;
  auto inner_step = [&](std::span<const Example> s) {
    model_.zero_grad();
    const InnerLoss l = model_.inner_loss(s, ep, true, &dropout_rng_);
    apply_sgd(model_.pred_head(), config_.inner_lr);
    if (step_proto) apply_sgd(model_.proto_head(), config_.inner_lr);
    return l;
  };
  if (config_.inner_schedule == InnerSchedule::full) {
    const InnerLoss l = inner_step(support);
    rec.inner_task = l.task;
    rec.inner_proto = l.proto;
  } else {
    for (const auto& b : batches) {
      const InnerLoss l = inner_step(b);
      rec.inner_task += l.task / static_cast<double>(batches.size());
      rec.inner_proto += l.proto / static_cast<double>(batches.size());
    }
  }

  // Outer loop: J at (phi_e, w'), first-order gradient applied to w.
  const ParamGroup w_adapted = model_.pred_head();
  model_.zero_grad();
  rec.outer = model_.outer_objective(query, w_adapted, true);
  auto& head = model_.pred_head();
  for (std::size_t p = 0; p < head.count(); ++p) head.at(p).value = w_before.at(p).value;
  outer_step();

  if (replay) {
    if (auto stats = memory_unigram_stats(query)) {
      memdiag_.push_back({{"order", config_.order_id},
                          {"seed", config_.seed},
                          {"method", method_name(config_.method)},
                          {"strategy", strategy_name(strategy)},
                          {"task", task_},
                          {"task_name", stream_.task(task_).name},
                          {"i", episode_},
                          {"stats", stats->to_json(false)}});
    }
  }
  return rec;
}

void Trainer::outer_step() {
  apply_adam(model_.encoder(), adam_encoder_);
  apply_adam(model_.proto_head(), adam_proto_);
  apply_adam(model_.pred_head(), adam_head_);
}

std::optional<EpisodeRecord> Trainer::sequential_step() {
  auto batch = stream_.next_batch(task_);
  if (!batch) return std::nullopt;
  ++episode_;
  EpisodeRecord rec = new_record(false);
  rec.consumed = batch->size();
  model_.zero_grad();
  rec.outer = model_.task_ce_loss(*batch, true);
  apply_adam(model_.encoder(), adam_encoder_);
  apply_adam(model_.pred_head(), adam_head_);
  return rec;
}

namespace {

// Gradient buffers of the encoder and prediction head, in a fixed order.
std::vector<std::vector<double>*> grad_buffers(PmrModel& model) {
  std::vector<std::vector<double>*> out;
  for (auto* g : {&model.encoder(), &model.pred_head()})
    for (auto& p : g->params()) out.push_back(&p.grad);
  return out;
}

}  // namespace

std::optional<EpisodeRecord> Trainer::agem_step() {
  auto batch = stream_.next_batch(task_);
  if (!batch) return std::nullopt;
  ++episode_;
  EpisodeRecord rec = new_record(false);
  rec.consumed = batch->size();

  std::vector<Example> reference;
  if (!memory_.empty()) {
    const auto all = memory_.read_all();
    for (std::size_t i : sample_without_replacement(memory_rng_, all.size(), batch_size_)) reference.push_back(all[i]);
  }

  model_.zero_grad();
  rec.outer = model_.task_ce_loss(*batch, true);
  if (!reference.empty()) {
    auto bufs = grad_buffers(model_);
    std::vector<std::vector<double>> g;
    for (auto* b : bufs) g.push_back(*b);
    model_.zero_grad();
    model_.task_ce_loss(reference, true);
    rec.memory_reads = reference.size();
    ledger_.memory_reads += reference.size();
    for (const auto& ex : reference) ledger_.memory_ids.push_back(ex.id);
    double g_dot_ref = 0.0;
    double ref_dot_ref = 0.0;
    for (std::size_t i = 0; i < bufs.size(); ++i) {
      g_dot_ref += kernels::dot(g[i].data(), bufs[i]->data(), g[i].size());
      ref_dot_ref += kernels::dot(bufs[i]->data(), bufs[i]->data(), g[i].size());
    }
    if (g_dot_ref < 0.0 && ref_dot_ref > 0.0) {
      const double scale = -g_dot_ref / ref_dot_ref;
      for (std::size_t i = 0; i < bufs.size(); ++i) kernels::axpy(scale, bufs[i]->data(), g[i].data(), g[i].size());
    }
    for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i] = std::move(g[i]);
  }
  apply_adam(model_.encoder(), adam_encoder_);
  apply_adam(model_.pred_head(), adam_head_);

  select_and_write(StrategyKind::random, memory_, candidate_pool(StrategyKind::random, {}, *batch), embedder(),
                   config_.per_class_cap, memory_rng_);
  return rec;
}

double Trainer::plain_accuracy(std::span<const Example> test) const {
  if (test.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : test) {
    if (static_cast<int>(model_.predict(ex.features)) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double Trainer::meta_infer(std::span<const Example> test, std::size_t task_batch_size) {
  if (test.empty()) return 0.0;
  const auto stored = memory_.read_all();
  if (stored.empty()) {
    log::warn("meta inference with empty memory; predicting without fine-tuning");
    return plain_accuracy(test);
  }
  const std::size_t want = config_.support_batches * task_batch_size;
  std::vector<Example> support;
  if (stored.size() >= want) {
    for (std::size_t i : sample_without_replacement(infer_rng_, stored.size(), want)) support.push_back(stored[i]);
  } else {
    support = stored;
    while (support.size() < want) support.push_back(stored[uniform_index(infer_rng_, stored.size())]);
  }

  // Fine-tune a copy; the trained model is left untouched.
  PmrModel tuned = model_;
  tuned.zero_grad();
  tuned.task_ce_loss(support, true, GradTargets{.encoder = false, .head = true});
  apply_sgd(tuned.pred_head(), config_.inference_lr.value_or(config_.inner_lr));

  std::size_t correct = 0;
  for (const auto& ex : test) {
    if (static_cast<int>(tuned.predict(ex.features)) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

void Trainer::finish_task() {
  if (!in_task_) throw StateError("finish_task: no task open");
  memory_.end_task();
  in_task_ = false;
  auto& s = summaries_.back();
  std::size_t reads = 0;
  for (const auto& e : episodes_)
    if (e.task == task_) reads += e.memory_reads;
  s.observed_rate = s.consumed ? 100.0 * static_cast<double>(reads) / static_cast<double>(s.consumed) : 0.0;

  const bool meta = config_.method == Method::pmr || config_.method == Method::random_replay;
  for (std::size_t k = 0; k <= task_; ++k) {
    const auto& test = stream_.task(k).test;
    const double a = meta ? meta_infer(test, stream_.batch_size(k)) : plain_accuracy(test);
    matrix_.set(task_, k, a);
  }
  ledger_.stream = stream_.ledger();
}

RunResult Trainer::run() {
  for (std::size_t k = 0; k < stream_.num_tasks(); ++k) {
    begin_task(k);
    while (train_episode()) {
    }
    finish_task();
  }
  RunResult r;
  r.matrix = matrix_;
  r.episodes = episodes_;
  r.tasks = summaries_;
  r.memdiag = memdiag_;
  r.ledger = ledger_;
  r.manifest = stream_.manifest();
  r.final_memory = memory_.snapshot_json();
  r.warnings = log::take_warnings();
  return r;
}

}  // namespace pmr
