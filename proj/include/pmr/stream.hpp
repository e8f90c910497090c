#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pmr/example.hpp"
#include "pmr/numerics.hpp"

namespace pmr {

inline constexpr std::size_t kDefaultHashDim = 4096;

// Lowercased unigrams: maximal runs of ASCII letters/digits (bytes >= 0x80
// count as letters so UTF-8 words stay whole).
std::vector<std::string> tokenize(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes);

// Raw unigram counts in fnv1a64(token) % dim buckets, no sign hashing.
SparseVector hash_features(const std::vector<std::string>& tokens, std::size_t dim);

// A task's data before and after label registration. Example labels are
// local indices into class_names until register_task rewrites them.
struct TaskData {
  std::string name;
  std::string label_space;  // tasks sharing a label space share global ids
  std::vector<std::string> class_names;
  std::vector<Example> train;
  std::vector<Example> test;
  std::vector<int> global_ids;  // filled by LabelRegistry::register_task

  std::size_t num_classes() const { return class_names.size(); }
};

struct CsvSchema {
  std::string label_column = "label";
  std::vector<std::string> text_columns = {"text"};
  // Raw label values in local-index order. Empty: sorted unique values.
  std::vector<std::string> classes;
  std::size_t hash_dim = kDefaultHashDim;
};

struct CsvRecord {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

// Parses RFC 4180 CSV (quoted fields, doubled quotes, embedded newlines).
// Malformed records raise InputError naming the line.
std::vector<CsvRecord> parse_csv(std::string_view content, const std::string& source);

// Examples from a CSV file. Ids are "<id_prefix>:<row>", where row counts
// data rows from 1.
std::vector<Example> ingest_csv(const std::filesystem::path& path, const CsvSchema& schema,
                                const std::string& id_prefix, std::vector<std::string>* class_names);

// Global class ids. Tasks in the same label space reuse ids; other tasks
// get fresh ids appended. Ids are never reassigned.
class LabelRegistry {
 public:
  // Assigns global ids, rewrites every example label and sets global_ids.
  std::vector<int> register_task(TaskData& task);
  std::vector<int> ids_for(const std::string& label_space, std::size_t classes);
  std::size_t size() const { return next_id_; }
  const std::map<std::string, std::vector<int>>& spaces() const { return spaces_; }

 private:
  std::map<std::string, std::vector<int>> spaces_;
  std::size_t next_id_ = 0;
};

// Ordered, single-pass class-incremental stream. Batches are stratified:
// per_class_batch examples of each class of the task. When a class cannot
// fill its share, the remaining examples form a ragged final batch and the
// task is marked exhausted.
class TaskStream {
 public:
  TaskStream(std::vector<TaskData> tasks, std::size_t per_class_batch, std::uint64_t seed);

  std::size_t num_tasks() const { return tasks_.size(); }
  const TaskData& task(std::size_t k) const { return tasks_.at(k); }
  const std::vector<TaskData>& tasks() const { return tasks_; }
  std::size_t per_class_batch() const { return per_class_batch_; }
  std::size_t batch_size(std::size_t k) const { return per_class_batch_ * tasks_.at(k).num_classes(); }

  std::optional<std::vector<Example>> next_batch(std::size_t k);
  bool exhausted(std::size_t k) const { return state_.at(k).exhausted; }
  std::size_t consumed(std::size_t k) const { return state_.at(k).consumed; }
  std::size_t remaining(std::size_t k) const;

  // Every example id handed out, in order.
  const std::vector<std::string>& ledger() const { return ledger_; }

  // Task order, sizes and class maps.
  nlohmann::json manifest() const;

 private:
  struct TaskState {
    std::vector<std::vector<std::size_t>> queues;  // per local class, shuffled train indices
    std::vector<std::size_t> cursor;
    std::size_t consumed = 0;
    bool exhausted = false;
  };

  std::vector<TaskData> tasks_;
  std::vector<TaskState> state_;
  std::size_t per_class_batch_;
  std::vector<std::string> ledger_;
};

// Task orders as 0-based index lists. For three tasks (configured as
// A, B, C) the orders are numbered 1..6 as A-B-C, A-C-B, C-A-B, C-B-A,
// B-A-C, B-C-A. Other counts fall back to lexicographic permutations with
// a warning.
std::vector<std::vector<std::size_t>> order_permutations(std::size_t num_tasks);

struct SynthTaskSpec {
  std::string name;
  std::size_t classes = 4;
  std::string label_space;  // empty: the task's own space
};

struct SynthSpec {
  std::vector<SynthTaskSpec> tasks;
  std::size_t samples_per_class = 500;
  std::size_t test_per_class = 100;
  // Odds of drawing a class-topic token versus a non-topic token. Infinity
  // gives disjoint per-class vocabularies.
  double separation = 1.0;
  std::size_t vocab_size = 3000;
  std::size_t topic_tokens = 40;   // per class of a label space
  std::size_t domain_tokens = 40;  // per task
  double domain_share = 0.3;       // of the non-topic draws
  std::size_t doc_length = 24;
  std::size_t hash_dim = kDefaultHashDim;
  std::uint64_t seed = 1;

  // Yelp-like (5 classes), AGNews-like (4) and Amazon-like (5, sharing the
  // Yelp label space).
  static SynthSpec benchmark_like();
};

// Synthetic text tasks with local labels (register with LabelRegistry
// before streaming). Deterministic in spec.seed.
std::vector<TaskData> synth_tasks(const SynthSpec& spec);

}  // namespace pmr
