#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmr/example.hpp"

namespace pmr {

// A[K][k]: accuracy on task k (training order) after finishing task K.
// Only k <= K is defined.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::vector<std::string> task_names);

  std::size_t num_tasks() const { return names_.size(); }
  const std::vector<std::string>& task_names() const { return names_; }

  void set(std::size_t after_task, std::size_t task, double accuracy);
  std::optional<double> get(std::size_t after_task, std::size_t task) const;
  bool row_complete(std::size_t after_task) const;

  nlohmann::json to_json() const;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::optional<double>>> rows_;
};

// Mean of the final row. Throws StateError when it is incomplete.
double acc(const AccuracyMatrix& matrix);

// Same metric over a plain final row.
double acc(std::span<const double> final_row);

struct OrderSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (N-1)
};

OrderSummary order_summary(std::span<const double> values);

struct ForgettingRecord {
  std::string task;
  double single_task_acc = 0.0;
  double sequential_acc = 0.0;
  double drop = 0.0;  // single - sequential; negative is a transfer gain
};

// One record per sequential task that has a single-task result. Tasks
// without one are skipped with a warning.
std::vector<ForgettingRecord> forgetting(const std::map<std::string, double>& single_runs,
                                         const std::vector<std::pair<std::string, double>>& sequential_run);

struct UnigramStats {
  std::size_t samples = 0;
  std::size_t tokens = 0;
  std::size_t distinct = 0;
  std::size_t singletons = 0;
  std::map<std::string, std::size_t> counts;
  std::map<std::size_t, std::size_t> histogram;  // occurrence count -> number of unigrams

  nlohmann::json to_json(bool include_counts = true) const;
};

// Exact unigram counts over the stored samples. Empty when any sample has
// no tokens (the diagnostic is skipped with a warning).
std::optional<UnigramStats> memory_unigram_stats(std::span<const Example> samples);

// Same over a memory snapshot JSON, reading the whitespace-joined "text" of
// main and outlier slots.
std::optional<UnigramStats> memory_unigram_stats(const nlohmann::json& snapshot);

struct TableRow {
  std::string method;
  std::size_t order = 0;
  std::string sequence;
  std::vector<double> seed_acc;  // ACC per seed, in seed order
};

struct Report {
  nlohmann::json results;              // written as results.json
  std::vector<TableRow> table;         // written as tables.csv
  std::vector<nlohmann::json> memdiag; // written as memdiag.jsonl
};

// Writes results.json, tables.csv and memdiag.jsonl into dir. Output is a
// pure function of the report. Throws IoError when a file cannot be written.
void emit_report(const std::filesystem::path& dir, const Report& report);

std::string format_table_csv(std::span<const TableRow> rows);

}  // namespace pmr
