// pmr: train, benchmark and inspect prototype-guided replay runs.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pmr/checkpoint.hpp"
#include "pmr/config.hpp"
#include "pmr/error.hpp"
#include "pmr/eval.hpp"
#include "pmr/gradsuite.hpp"
#include "pmr/harness.hpp"
#include "pmr/kernels.hpp"
#include "pmr/log.hpp"

namespace {

using nlohmann::json;

// Command-line flags that mirror config keys. Only flags given on the
// command line end up in the override document.
class ConfigFlags {
 public:
  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path_, "JSON config file")->check(CLI::ExistingFile);
    number(app, "--seed", {"seed"}, "run seed (PMR_SEED overrides the file, this flag overrides both)");
    number(app, "--order", {"order"}, "task order 1..6");
    text(app, "--method", {"method"}, "pmr, sequential, random_replay or agem");
    text(app, "--strategy", {"strategy"}, "argmin, augment, argmax, mix or random");
    real(app, "--inner-lr", {"inner_lr"}, "inner-loop SGD rate (alpha)");
    real(app, "--outer-lr", {"outer_lr"}, "outer-loop Adam rate (beta)");
    real(app, "--inference-lr", {"inference_lr"}, "fine-tune rate at inference (default: inner rate)");
    number(app, "--support-batches", {"support_batches"}, "support batches per episode (m)");
    number(app, "--per-class-batch", {"per_class_batch"}, "examples per class in a stream batch");
    number(app, "--n-support", {"n_support"}, "prototype support points per class");
    number(app, "--n-query", {"n_query"}, "prototypical query points per class");
    text(app, "--inner-schedule", {"inner_schedule"}, "full or per_batch");
    flag(app, "--inner-w-only", {"inner_w_only"}, "keep the prototype head out of the inner step");
    number(app, "--replay-period", {"replay", "period"}, "replay every R_F episodes");
    real(app, "--target-rate", {"replay", "target_rate"}, "replay rate in percent; overrides the period");
    number(app, "--memory-per-class", {"memory", "per_class"}, "stored samples per class (n)");
    number(app, "--memory-budget", {"memory", "budget"}, "total memory budget (B)");
    number(app, "--feature-dim", {"model", "feature_dim"}, "hashed feature width");
    number(app, "--embed-dim", {"model", "embed_dim"}, "encoder output width");
    number(app, "--proto-hidden", {"model", "proto_hidden"}, "prototype head hidden width");
    number(app, "--proto-dim", {"model", "proto_dim"}, "prototype space width");
    real(app, "--dropout", {"model", "dropout"}, "prototype head dropout");
    text(app, "--distance", {"model", "distance"}, "squared_euclidean or euclidean");
    number_list(app, "--orders", {"bench", "orders"}, "orders for sweeps");
    number_list(app, "--seeds", {"bench", "seeds"}, "seeds for sweeps");
    text_list(app, "--methods", {"bench", "methods"}, "methods for bench/forget, e.g. pmr:argmin sequential");
    text_list(app, "--strategies", {"bench", "strategies"}, "strategies for ablate");
    app->add_option("--isa", isa_, "kernel variant: scalar or avx2");
    app->add_flag("-q,--quiet", quiet_, "suppress warnings on stderr");
  }

  pmr::AppConfig load() const {
    if (!isa_.empty()) pmr::kernels::set_active_isa(pmr::kernels::parse_isa(isa_));
    pmr::log::set_quiet(quiet_);
    json overrides = json::object();
    for (const auto& apply : setters_) apply(overrides);
    std::optional<std::filesystem::path> path;
    if (!config_path_.empty()) path = config_path_;
    return pmr::load_config(path, overrides);
  }

 private:
  static json& at(json& doc, const std::vector<std::string>& keys) {
    json* node = &doc;
    for (const auto& k : keys) node = &(*node)[k];
    return *node;
  }

  template <typename T>
  void add(CLI::App* app, const std::string& name, std::vector<std::string> keys, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    setters_.push_back([opt, value, keys](json& doc) {
      if (opt->count() > 0) at(doc, keys) = *value;
    });
  }
  void number(CLI::App* a, const std::string& n, std::vector<std::string> k, const std::string& h) {
    add<std::uint64_t>(a, n, std::move(k), h);
  }
  void real(CLI::App* a, const std::string& n, std::vector<std::string> k, const std::string& h) {
    add<double>(a, n, std::move(k), h);
  }
  void text(CLI::App* a, const std::string& n, std::vector<std::string> k, const std::string& h) {
    add<std::string>(a, n, std::move(k), h);
  }
  void number_list(CLI::App* a, const std::string& n, std::vector<std::string> k, const std::string& h) {
    add<std::vector<std::uint64_t>>(a, n, std::move(k), h);
  }
  void text_list(CLI::App* a, const std::string& n, std::vector<std::string> k, const std::string& h) {
    add<std::vector<std::string>>(a, n, std::move(k), h);
  }
  void flag(CLI::App* app, const std::string& name, std::vector<std::string> keys, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(name, *value, help);
    setters_.push_back([opt, value, keys](json& doc) {
      if (opt->count() > 0) at(doc, keys) = *value;
    });
  }

  std::string config_path_;
  std::string isa_;
  bool quiet_ = false;
  std::vector<std::function<void(json&)>> setters_;
};

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw pmr::IoError("cannot write " + path.string());
  out << content;
}

pmr::Progress progress_printer() {
  return [](const std::string& line) { pmr::log::info(line); };
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_train(const ConfigFlags& flags, const std::string& out_dir, const std::string& checkpoint) {
  const auto t0 = std::chrono::steady_clock::now();
  const pmr::AppConfig app = flags.load();
  const auto tasks = pmr::load_tasks(app);
  pmr::Trainer trainer(app.run, pmr::order_tasks(tasks, app.run.order_id));
  const pmr::RunResult result = trainer.run();
  const pmr::Report report = pmr::train_report(app, result, tasks);
  pmr::emit_report(out_dir, report);

  std::string episodes;
  for (const auto& e : result.episodes) episodes += e.to_json().dump() + "\n";
  write_text(std::filesystem::path(out_dir) / "episodes.jsonl", episodes);
  const json ledger = {{"stream", result.ledger.stream},
                       {"memory_reads", result.ledger.memory_reads},
                       {"memory_ids", result.ledger.memory_ids}};
  write_text(std::filesystem::path(out_dir) / "ledger.json", ledger.dump() + "\n");
  write_text(std::filesystem::path(out_dir) / "manifest.json", result.manifest.dump(2) + "\n");
  if (!checkpoint.empty()) pmr::save_checkpoint(checkpoint, trainer.model());

  std::printf("ACC %.4f  (%s, order %zu, seed %llu)\n", result.final_acc(),
              pmr::MethodSpec{app.run.method, app.run.strategy}.label().c_str(), app.run.order_id,
              static_cast<unsigned long long>(app.run.seed));
  for (const auto& t : result.tasks) {
    std::printf("  %-10s b=%zu R_F=%zu episodes=%zu replays=%zu rate=%.4f%%\n", t.name.c_str(), t.batch_size,
                t.period, t.episodes, t.replays, t.expected_rate);
  }
  std::printf("wrote %s (%.1fs)\n", out_dir.c_str(), seconds_since(t0));
  return 0;
}

void print_summary(const pmr::Report& report) {
  for (const auto& [label, s] : report.results.at("summary").items()) {
    std::printf("%-16s", label.c_str());
    for (const auto& [order, v] : s.at("per_order").items()) std::printf("  o%s %6.2f", order.c_str(), 100.0 * v.get<double>());
    std::printf("  | %6.2f +- %5.2f\n", 100.0 * s.at("mean").get<double>(), 100.0 * s.at("std").get<double>());
  }
}

int cmd_sweep(const ConfigFlags& flags, const std::string& out_dir, bool ablate) {
  const auto t0 = std::chrono::steady_clock::now();
  const pmr::AppConfig app = flags.load();
  const auto tasks = pmr::load_tasks(app);
  std::vector<pmr::MethodSpec> methods = app.bench.methods;
  if (ablate) {
    methods.clear();
    for (auto s : app.bench.strategies) methods.push_back(pmr::MethodSpec{pmr::Method::pmr, s});
  }
  const pmr::Report report = pmr::sweep_report(app, tasks, methods, progress_printer());
  pmr::emit_report(out_dir, report);
  print_summary(report);
  std::printf("wrote %s (%.1fs)\n", out_dir.c_str(), seconds_since(t0));
  return 0;
}

int cmd_forget(const ConfigFlags& flags, const std::string& out_dir) {
  const pmr::AppConfig app = flags.load();
  const auto tasks = pmr::load_tasks(app);
  const pmr::Report report = pmr::forgetting_report(app, tasks, app.bench.methods, progress_printer());
  pmr::emit_report(out_dir, report);
  for (const auto& [label, records] : report.results.at("forgetting").items()) {
    std::printf("%s\n", label.c_str());
    for (const auto& r : records) {
      std::printf("  %-10s single %6.2f  sequential %6.2f  drop %+6.2f\n", r.at("task").get<std::string>().c_str(),
                  100.0 * r.at("single").get<double>(), 100.0 * r.at("sequential").get<double>(),
                  100.0 * r.at("drop").get<double>());
    }
  }
  return 0;
}

int cmd_memdiag(const std::string& snapshot_path, bool with_counts) {
  std::ifstream in(snapshot_path);
  if (!in) throw pmr::IoError("cannot read " + snapshot_path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw pmr::InputError(snapshot_path + ": " + e.what());
  }
  // Accept a bare snapshot or a train results.json that embeds one.
  if (doc.contains("final_memory")) doc = doc.at("final_memory");
  const auto stats = pmr::memory_unigram_stats(doc);
  if (!stats) return 1;
  std::printf("%s\n", stats->to_json(with_counts).dump(2).c_str());
  return 0;
}

int cmd_gradcheck(std::size_t instances, std::uint64_t seed, double eps, double tolerance) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  for (const auto& e : pmr::gradient_suite(instances, seed, eps)) {
    const bool pass = e.max_relative_error < tolerance;
    ok = ok && pass;
    std::printf("%-14s instances=%zu max_rel_err=%.3e worst=%s %s\n", e.loss.c_str(), e.instances,
                e.max_relative_error, e.worst_param.c_str(), pass ? "ok" : "FAIL");
  }
  std::printf("kernels=%s time=%.2fs\n", std::string(pmr::kernels::isa_name(pmr::kernels::active_isa())).c_str(),
              seconds_since(t0));
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype-guided memory replay: continual-learning trainer and benchmark harness"};
  app.require_subcommand(1);

  ConfigFlags train_flags, bench_flags, ablate_flags, forget_flags;
  std::string train_out = "runs/train", bench_out = "runs/bench", ablate_out = "runs/ablate", forget_out = "runs/forget";
  std::string checkpoint;

  auto* train = app.add_subcommand("train", "train one method on one task order");
  train_flags.attach(train);
  train->add_option("-o,--out", train_out, "output directory");
  train->add_option("--checkpoint", checkpoint, "write the trained model to this JSON file");

  auto* bench = app.add_subcommand("bench", "sweep methods over orders and seeds");
  bench_flags.attach(bench);
  bench->add_option("-o,--out", bench_out, "output directory");

  auto* ablate = app.add_subcommand("ablate", "sweep selection strategies over orders and seeds");
  ablate_flags.attach(ablate);
  ablate->add_option("-o,--out", ablate_out, "output directory");

  auto* forget = app.add_subcommand("forget", "single-task versus sequential accuracy per task");
  forget_flags.attach(forget);
  forget->add_option("-o,--out", forget_out, "output directory");

  std::string snapshot;
  bool counts = false;
  auto* memdiag = app.add_subcommand("memdiag", "unigram statistics of a memory snapshot");
  memdiag->add_option("snapshot", snapshot, "memory snapshot JSON or train results.json")->required();
  memdiag->add_flag("--counts", counts, "include per-unigram counts");

  std::size_t instances = 50;
  std::uint64_t gc_seed = 1;
  double eps = 1e-4, tolerance = 1e-4;
  std::string gc_isa;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every training loss");
  gradcheck->add_option("-n,--instances", instances, "random instances per loss");
  gradcheck->add_option("--seed", gc_seed, "instance seed");
  gradcheck->add_option("--eps", eps, "central-difference step");
  gradcheck->add_option("--tolerance", tolerance, "max relative error allowed");
  gradcheck->add_option("--isa", gc_isa, "kernel variant: scalar or avx2");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_flags, train_out, checkpoint);
    if (bench->parsed()) return cmd_sweep(bench_flags, bench_out, false);
    if (ablate->parsed()) return cmd_sweep(ablate_flags, ablate_out, true);
    if (forget->parsed()) return cmd_forget(forget_flags, forget_out);
    if (memdiag->parsed()) return cmd_memdiag(snapshot, counts);
    if (gradcheck->parsed()) {
      if (!gc_isa.empty()) pmr::kernels::set_active_isa(pmr::kernels::parse_isa(gc_isa));
      return cmd_gradcheck(instances, gc_seed, eps, tolerance);
    }
  } catch (const pmr::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const pmr::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
