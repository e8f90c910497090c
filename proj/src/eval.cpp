#include "pmr/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pmr/error.hpp"
#include "pmr/log.hpp"

namespace pmr {

AccuracyMatrix::AccuracyMatrix(std::vector<std::string> task_names) : names_(std::move(task_names)) {
  rows_.resize(names_.size());
  for (std::size_t K = 0; K < rows_.size(); ++K) rows_[K].resize(K + 1);
}

void AccuracyMatrix::set(std::size_t after_task, std::size_t task, double accuracy) {
  if (after_task >= rows_.size() || task > after_task) {
    throw StateError("accuracy entry (" + std::to_string(after_task) + ", " + std::to_string(task) + ") undefined");
  }
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw NumericalError("accuracy outside [0, 1]");
  rows_[after_task][task] = accuracy;
}

std::optional<double> AccuracyMatrix::get(std::size_t after_task, std::size_t task) const {
  if (after_task >= rows_.size() || task > after_task) return std::nullopt;
  return rows_[after_task][task];
}

bool AccuracyMatrix::row_complete(std::size_t after_task) const {
  if (after_task >= rows_.size()) return false;
  for (const auto& v : rows_[after_task])
    if (!v) return false;
  return true;
}

nlohmann::json AccuracyMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rows_) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& v : r) row.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    rows.push_back(std::move(row));
  }
  return {{"tasks", names_}, {"rows", rows}};
}

double acc(const AccuracyMatrix& matrix) {
  if (matrix.num_tasks() == 0) throw StateError("acc: empty accuracy matrix");
  const std::size_t K = matrix.num_tasks() - 1;
  if (!matrix.row_complete(K)) throw StateError("acc: final row incomplete");
  std::vector<double> row;
  for (std::size_t k = 0; k <= K; ++k) row.push_back(*matrix.get(K, k));
  return acc(row);
}

double acc(std::span<const double> final_row) {
  if (final_row.empty()) throw StateError("acc: empty row");
  double s = 0.0;
  for (double v : final_row) s += v;
  return s / static_cast<double>(final_row.size());
}

OrderSummary order_summary(std::span<const double> values) {
  OrderSummary out;
  if (values.empty()) return out;
  double s = 0.0;
  for (double v : values) s += v;
  out.mean = s / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return out;
}

std::vector<ForgettingRecord> forgetting(const std::map<std::string, double>& single_runs,
                                         const std::vector<std::pair<std::string, double>>& sequential_run) {
  std::vector<ForgettingRecord> out;
  for (const auto& [task, seq] : sequential_run) {
    const auto it = single_runs.find(task);
    if (it == single_runs.end()) {
      log::warn("forgetting: no single-task result for '" + task + "'");
      continue;
    }
    out.push_back(ForgettingRecord{task, it->second, seq, it->second - seq});
  }
  return out;
}

nlohmann::json UnigramStats::to_json(bool include_counts) const {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [c, n] : histogram) hist[std::to_string(c)] = n;
  nlohmann::json j = {{"samples", samples},  {"tokens", tokens},   {"distinct", distinct},
                      {"singletons", singletons}, {"histogram", hist}};
  if (include_counts) j["counts"] = counts;
  return j;
}

namespace {

UnigramStats finish(UnigramStats s) {
  s.distinct = s.counts.size();
  for (const auto& [tok, c] : s.counts) {
    ++s.histogram[c];
    if (c == 1) ++s.singletons;
  }
  return s;
}

}  // namespace

std::optional<UnigramStats> memory_unigram_stats(std::span<const Example> samples) {
  UnigramStats s;
  for (const auto& ex : samples) {
    if (ex.tokens.empty()) {
      log::warn("memory diagnostics skipped: sample '" + ex.id + "' has no tokens");
      return std::nullopt;
    }
    ++s.samples;
    for (const auto& t : ex.tokens) {
      ++s.counts[t];
      ++s.tokens;
    }
  }
  return finish(std::move(s));
}

std::optional<UnigramStats> memory_unigram_stats(const nlohmann::json& snapshot) {
  UnigramStats s;
  for (const char* key : {"classes", "outliers"}) {
    if (!snapshot.contains(key)) continue;
    for (const auto& cls : snapshot.at(key)) {
      for (const auto& sample : cls.at("samples")) {
        const std::string text = sample.value("text", std::string());
        std::istringstream in(text);
        std::string tok;
        std::size_t n = 0;
        while (in >> tok) {
          ++s.counts[tok];
          ++n;
        }
        if (n == 0) {
          log::warn("memory diagnostics skipped: sample '" + sample.value("id", std::string("?")) +
                    "' has no tokens");
          return std::nullopt;
        }
        s.tokens += n;
        ++s.samples;
      }
    }
  }
  return finish(std::move(s));
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::string format_table_csv(std::span<const TableRow> rows) {
  std::string out = "method,order,sequence,acc_mean,acc_std,seeds,seed_acc\n";
  for (const auto& r : rows) {
    const auto s = order_summary(r.seed_acc);
    std::string per_seed;
    for (std::size_t i = 0; i < r.seed_acc.size(); ++i) {
      if (i) per_seed += ';';
      per_seed += fmt(r.seed_acc[i]);
    }
    out += csv_field(r.method) + ',' + std::to_string(r.order) + ',' + csv_field(r.sequence) + ',' + fmt(s.mean) +
           ',' + fmt(s.std) + ',' + std::to_string(r.seed_acc.size()) + ',' + per_seed + '\n';
  }
  return out;
}

void emit_report(const std::filesystem::path& dir, const Report& report) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "results.json", report.results.dump(2) + "\n");
  write_file(dir / "tables.csv", format_table_csv(report.table));
  std::string lines;
  for (const auto& j : report.memdiag) lines += j.dump() + "\n";
  write_file(dir / "memdiag.jsonl", lines);
}

}  // namespace pmr
