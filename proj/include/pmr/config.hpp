#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmr/stream.hpp"
#include "pmr/trainer.hpp"

namespace pmr {

struct CsvTaskConfig {
  std::string name;
  std::string label_space;
  std::filesystem::path train;
  std::filesystem::path test;
  CsvSchema schema;
};

// Either a synthetic spec or CSV tasks, listed as tasks A, B, C, ...
struct DataConfig {
  std::optional<SynthSpec> synthetic;
  std::vector<CsvTaskConfig> csv;
};

// One method column of a sweep, e.g. "pmr:argmin" or "sequential".
struct MethodSpec {
  Method method = Method::pmr;
  StrategyKind strategy = StrategyKind::argmin;

  std::string label() const;
  static MethodSpec parse(std::string_view text);
};

struct BenchConfig {
  std::vector<std::size_t> orders = {1, 2, 3, 4, 5, 6};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<MethodSpec> methods = {MethodSpec{Method::pmr, StrategyKind::argmin},
                                     MethodSpec{Method::sequential, StrategyKind::argmin}};
  std::vector<StrategyKind> strategies = {StrategyKind::argmin, StrategyKind::augment, StrategyKind::argmax,
                                          StrategyKind::mix};
};

struct AppConfig {
  RunConfig run;
  DataConfig data;
  BenchConfig bench;
  std::filesystem::path base_dir;  // relative CSV paths resolve here
};

// Default configuration as JSON; every accepted key appears in it.
nlohmann::json default_config_json();

// Recursively merges patch into base (objects merge, everything else
// replaces; null in the patch leaves base unchanged).
void merge_json(nlohmann::json& base, const nlohmann::json& patch);

// Parses a full config document. Unknown keys are rejected.
AppConfig parse_config(const nlohmann::json& doc);

// Defaults, then the JSON file, then PMR_SEED, then overrides (command
// line flags), each layer replacing the previous one.
AppConfig load_config(const std::optional<std::filesystem::path>& path, const nlohmann::json& overrides = {});

// PMR_SEED as an integer, if set. Malformed values raise ConfigError.
std::optional<std::uint64_t> env_seed();

// Task data in configured order (local labels).
std::vector<TaskData> load_tasks(const AppConfig& config);

// Tasks rearranged for a 1-based order id.
std::vector<TaskData> order_tasks(const std::vector<TaskData>& tasks, std::size_t order_id);

}  // namespace pmr
