#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmr/config.hpp"
#include "pmr/eval.hpp"
#include "pmr/trainer.hpp"

namespace pmr {

// Config for one run of a sweep: the app's run settings with the method,
// order and seed replaced.
RunConfig run_config_for(const AppConfig& app, const MethodSpec& method, std::size_t order, std::uint64_t seed);

// Trains one method on one task order. tasks are in configured order.
RunResult run_single(const AppConfig& app, const std::vector<TaskData>& tasks, const MethodSpec& method,
                     std::size_t order, std::uint64_t seed);

// Task names joined in training order, e.g. "yelp>agnews>amazon".
std::string order_sequence(const std::vector<TaskData>& tasks, std::size_t order);

using Progress = std::function<void(const std::string&)>;

// One train run as a report (results.json holds config, manifest, matrix,
// replay rates and final memory).
Report train_report(const AppConfig& app, const RunResult& result, const std::vector<TaskData>& tasks);

// methods x orders x seeds. results.json carries every run's matrix plus a
// per-method summary (mean and N-1 std over per-order ACC, each order
// averaged over seeds).
Report sweep_report(const AppConfig& app, const std::vector<TaskData>& tasks, const std::vector<MethodSpec>& methods,
                    const Progress& progress = {});

// Single-task accuracy versus accuracy after the full sequence, per task,
// averaged over seeds, for each method on the configured order.
Report forgetting_report(const AppConfig& app, const std::vector<TaskData>& tasks,
                         const std::vector<MethodSpec>& methods, const Progress& progress = {});

}  // namespace pmr
