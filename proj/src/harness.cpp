#include "pmr/harness.hpp"

#include <map>

#include "pmr/error.hpp"

namespace pmr {

RunConfig run_config_for(const AppConfig& app, const MethodSpec& method, std::size_t order, std::uint64_t seed) {
  RunConfig c = app.run;
  c.method = method.method;
  c.strategy = method.method == Method::pmr ? method.strategy : StrategyKind::random;
  c.order_id = order;
  c.seed = seed;
  return c;
}

RunResult run_single(const AppConfig& app, const std::vector<TaskData>& tasks, const MethodSpec& method,
                     std::size_t order, std::uint64_t seed) {
  Trainer trainer(run_config_for(app, method, order, seed), order_tasks(tasks, order));
  return trainer.run();
}

std::string order_sequence(const std::vector<TaskData>& tasks, std::size_t order) {
  const auto perms = order_permutations(tasks.size());
  if (order == 0 || order > perms.size()) throw ConfigError("order " + std::to_string(order) + " out of range");
  std::string s;
  for (std::size_t i : perms[order - 1]) {
    if (!s.empty()) s += '>';
    s += tasks[i].name;
  }
  return s;
}

Report train_report(const AppConfig& app, const RunResult& result, const std::vector<TaskData>& tasks) {
  Report r;
  const MethodSpec m{app.run.method, app.run.strategy};
  r.results = {{"config", app.run.to_json()},
               {"sequence", order_sequence(tasks, app.run.order_id)},
               {"run", result.to_json()},
               {"manifest", result.manifest},
               {"final_memory", result.final_memory}};
  r.table.push_back(TableRow{m.label(), app.run.order_id, order_sequence(tasks, app.run.order_id), {result.final_acc()}});
  r.memdiag = result.memdiag;
  return r;
}

Report sweep_report(const AppConfig& app, const std::vector<TaskData>& tasks, const std::vector<MethodSpec>& methods,
                    const Progress& progress) {
  Report r;
  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& m : methods) {
    std::vector<double> order_means;
    nlohmann::json per_order = nlohmann::json::object();
    for (std::size_t order : app.bench.orders) {
      TableRow row{m.label(), order, order_sequence(tasks, order), {}};
      for (std::uint64_t seed : app.bench.seeds) {
        const RunResult res = run_single(app, tasks, m, order, seed);
        row.seed_acc.push_back(res.final_acc());
        runs.push_back({{"method", m.label()}, {"order", order}, {"seed", seed}, {"run", res.to_json()}});
        for (const auto& line : res.memdiag) r.memdiag.push_back(line);
        if (progress) {
          progress(m.label() + " order " + std::to_string(order) + " seed " + std::to_string(seed) +
                   " acc " + std::to_string(res.final_acc()));
        }
      }
      const auto s = order_summary(row.seed_acc);
      per_order[std::to_string(order)] = s.mean;
      order_means.push_back(s.mean);
      r.table.push_back(std::move(row));
    }
    const auto s = order_summary(order_means);
    summary[m.label()] = {{"per_order", per_order}, {"mean", s.mean}, {"std", s.std}};
  }
  nlohmann::json config = app.run.to_json();
  config.erase("method");
  config.erase("strategy");
  config.erase("order");
  config.erase("seed");
  r.results = {{"config", config},
               {"orders", app.bench.orders},
               {"seeds", app.bench.seeds},
               {"summary", summary},
               {"runs", runs}};
  return r;
}

Report forgetting_report(const AppConfig& app, const std::vector<TaskData>& tasks,
                         const std::vector<MethodSpec>& methods, const Progress& progress) {
  Report r;
  const std::size_t order = app.run.order_id;
  const auto ordered = order_tasks(tasks, order);
  nlohmann::json out = nlohmann::json::object();
  for (const auto& m : methods) {
    std::map<std::string, double> single;
    std::vector<std::pair<std::string, double>> sequential;
    for (const auto& t : ordered) sequential.emplace_back(t.name, 0.0);
    const double seeds = static_cast<double>(app.bench.seeds.size());
    for (std::uint64_t seed : app.bench.seeds) {
      for (const auto& t : ordered) {
        Trainer solo(run_config_for(app, m, order, seed), std::vector<TaskData>{t});
        single[t.name] += solo.run().matrix.get(0, 0).value() / seeds;
      }
      const RunResult full = run_single(app, tasks, m, order, seed);
      const std::size_t K = ordered.size() - 1;
      for (std::size_t k = 0; k <= K; ++k) sequential[k].second += full.matrix.get(K, k).value() / seeds;
      if (progress) progress(m.label() + " seed " + std::to_string(seed) + " done");
    }
    nlohmann::json records = nlohmann::json::array();
    for (const auto& f : forgetting(single, sequential)) {
      records.push_back({{"task", f.task}, {"single", f.single_task_acc}, {"sequential", f.sequential_acc}, {"drop", f.drop}});
    }
    out[m.label()] = records;
  }
  r.results = {{"config", app.run.to_json()},
               {"sequence", order_sequence(tasks, order)},
               {"seeds", app.bench.seeds},
               {"forgetting", out}};
  return r;
}

}  // namespace pmr
