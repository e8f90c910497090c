#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pmr/eval.hpp"
#include "pmr/model.hpp"
#include "pmr/proto_memory.hpp"
#include "pmr/strategy.hpp"
#include "pmr/stream.hpp"

namespace pmr {

enum class Method { pmr, sequential, random_replay, agem };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

// How the inner loop walks the support set: one SGD step on the full inner
// loss, or one step per support batch (each pairing that batch's
// cross-entropy with the prototypical loss).
enum class InnerSchedule { full, per_batch };

std::string_view inner_schedule_name(InnerSchedule s);
InnerSchedule parse_inner_schedule(std::string_view name);

struct RunConfig {
  double inner_lr = 3e-3;   // alpha
  double outer_lr = 3e-5;   // beta
  std::optional<double> inference_lr;  // defaults to inner_lr
  std::size_t support_batches = 5;     // m
  std::size_t replay_period = 50;      // R_F
  std::optional<double> target_rate;   // percent; overrides replay_period per task
  std::size_t per_class_cap = 5;       // n
  std::size_t memory_budget = 45;      // B
  std::size_t n_support = 5;           // per class, prototype support
  std::size_t n_query = 5;             // per class, prototypical queries
  std::size_t per_class_batch = 5;     // b = per_class_batch * task classes
  InnerSchedule inner_schedule = InnerSchedule::per_batch;
  bool inner_w_only = false;           // keep the prototype head out of the inner step
  StrategyKind strategy = StrategyKind::argmin;
  Method method = Method::pmr;
  std::size_t order_id = 1;
  std::uint64_t seed = 1;
  ModelConfig model;

  // Throws ConfigError on non-positive sizes or rates.
  void validate() const;
  nlohmann::json to_json() const;
};

struct EpisodeRecord {
  std::size_t task = 0;  // position in the run's order
  std::string task_name;
  std::size_t index = 0;  // i, from 1 within each task
  bool replay = false;
  double inner_task = 0.0;   // L_i
  double inner_proto = 0.0;  // L_P
  double outer = 0.0;        // J
  std::size_t memory_size = 0;
  std::size_t outlier_size = 0;
  std::size_t consumed = 0;      // stream examples drawn this episode
  std::size_t memory_reads = 0;  // memory examples used as queries

  nlohmann::json to_json() const;
};

struct TaskSummary {
  std::string name;
  std::size_t batch_size = 0;
  std::size_t period = 0;
  std::size_t episodes = 0;
  std::size_t replays = 0;
  std::size_t consumed = 0;
  std::size_t registered_classes = 0;
  double expected_rate = 0.0;  // replay_rate at n * registered classes (capped by B)
  double observed_rate = 0.0;  // 100 * memory reads / stream examples

  nlohmann::json to_json() const;
};

// Where every example the model trained on came from.
struct SourceLedger {
  std::vector<std::string> stream;  // example ids, in draw order
  std::size_t memory_reads = 0;
  std::vector<std::string> memory_ids;  // ids read from memory, in order
};

struct RunResult {
  AccuracyMatrix matrix;
  std::vector<EpisodeRecord> episodes;
  std::vector<TaskSummary> tasks;
  std::vector<nlohmann::json> memdiag;  // unigram stats per replay episode
  SourceLedger ledger;
  nlohmann::json manifest;
  nlohmann::json final_memory;
  std::vector<std::string> warnings;

  double final_acc() const { return acc(matrix); }
  nlohmann::json to_json() const;
};

// Runs one method over tasks given in training order. Tasks must carry
// local labels; the trainer registers them.
class Trainer {
 public:
  Trainer(const RunConfig& config, std::vector<TaskData> ordered_tasks);

  // Task setup: class registration, batch size and replay period.
  void begin_task(std::size_t k);
  // One episode (or one baseline step) of the current task. Empty once the
  // stream for the task is exhausted.
  std::optional<EpisodeRecord> train_episode();
  // Memory flush and evaluation of every task seen so far.
  void finish_task();

  RunResult run();

  // Meta-inference on one test set: a copy of the prediction head
  // takes one SGD step on a memory sample, then predicts.
  double meta_infer(std::span<const Example> test, std::size_t task_batch_size);
  double plain_accuracy(std::span<const Example> test) const;

  const RunConfig& config() const { return config_; }
  PmrModel& model() { return model_; }
  const ReplayMemory& memory() const { return memory_; }
  ReplayMemory& memory() { return memory_; }
  const TaskStream& stream() const { return stream_; }
  TaskStream& stream() { return stream_; }
  const SourceLedger& ledger() const { return ledger_; }
  const std::vector<TaskSummary>& task_summaries() const { return summaries_; }
  std::size_t current_period() const { return period_; }
  std::size_t current_batch_size() const { return batch_size_; }

 private:
  std::optional<EpisodeRecord> pmr_episode();
  std::optional<EpisodeRecord> sequential_step();
  std::optional<EpisodeRecord> agem_step();
  void outer_step();
  Embedder embedder() const;
  EpisodeRecord new_record(bool replay) const;

  RunConfig config_;
  TaskStream stream_;
  PmrModel model_;
  ReplayMemory memory_;
  OptimizerState adam_encoder_;
  OptimizerState adam_proto_;
  OptimizerState adam_head_;
  Rng dropout_rng_;
  Rng memory_rng_;
  Rng infer_rng_;
  SourceLedger ledger_;
  AccuracyMatrix matrix_;
  std::vector<TaskSummary> summaries_;
  std::vector<EpisodeRecord> episodes_;
  std::vector<nlohmann::json> memdiag_;
  std::size_t registered_ = 0;
  std::size_t task_ = 0;
  bool in_task_ = false;
  std::size_t episode_ = 0;
  std::size_t period_ = 0;
  std::size_t batch_size_ = 0;
};

}  // namespace pmr
