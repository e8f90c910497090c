#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "pmr/config.hpp"
#include "pmr/error.hpp"

using namespace pmr;
using nlohmann::json;

namespace {

std::filesystem::path write_config(const std::string& name, const json& j) {
  const auto dir = std::filesystem::temp_directory_path() / "pmr_config_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << j.dump();
  return path;
}

// Sets PMR_SEED for one scope.
struct SeedEnv {
  explicit SeedEnv(const char* v) {
    if (v)
      ::setenv("PMR_SEED", v, 1);
    else
      ::unsetenv("PMR_SEED");
  }
  ~SeedEnv() { ::unsetenv("PMR_SEED"); }
};

}  // namespace

TEST_CASE("defaults parse and round trip") {
  SeedEnv env(nullptr);
  const AppConfig c = parse_config(default_config_json());
  CHECK(c.run.inner_lr == 3e-3);
  CHECK(c.run.outer_lr == 3e-5);
  CHECK(c.run.support_batches == 5);
  CHECK(c.run.replay_period == 50);
  CHECK(c.run.per_class_cap == 5);
  CHECK(c.run.memory_budget == 45);
  CHECK(c.run.model.feature_dim == 4096);
  REQUIRE(c.data.synthetic.has_value());
  CHECK(c.data.synthetic->tasks.size() == 3);
  CHECK(c.data.synthetic->hash_dim == c.run.model.feature_dim);
  CHECK(c.bench.orders.size() == 6);
}

TEST_CASE("file, PMR_SEED and flags layer in that order") {
  const auto path = write_config("layer.json", {{"seed", 4}, {"inner_lr", 0.5}, {"replay", {{"period", 7}}}});
  {
    SeedEnv env(nullptr);
    const AppConfig c = load_config(path);
    CHECK(c.run.seed == 4);
    CHECK(c.run.inner_lr == 0.5);
    CHECK(c.run.replay_period == 7);
    CHECK(c.run.outer_lr == 3e-5);
    CHECK(c.base_dir == path.parent_path());
  }
  {
    SeedEnv env("9");
    CHECK(load_config(path).run.seed == 9);
    CHECK(load_config(path, {{"seed", 12}}).run.seed == 12);
  }
  {
    SeedEnv env("nine");
    CHECK_THROWS_AS(load_config(path), ConfigError);
  }
}

TEST_CASE("unknown keys and bad values are rejected") {
  SeedEnv env(nullptr);
  json doc = default_config_json();
  doc["inner_learning_rate"] = 0.1;
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
  doc = default_config_json();
  doc["replay"]["every"] = 3;
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
  doc = default_config_json();
  doc["strategy"] = "closest";
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
  doc = default_config_json();
  doc["inner_lr"] = "fast";
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
  CHECK_THROWS_AS(load_config(std::filesystem::path("/nonexistent/pmr.json")), IoError);
  const auto broken = write_config("broken.json", json::object());
  std::ofstream(broken) << "{ not json";
  CHECK_THROWS_AS(load_config(broken), ConfigError);
}

TEST_CASE("infinite separation") {
  SeedEnv env(nullptr);
  const AppConfig c = load_config(std::nullopt, {{"data", {{"synthetic", {{"separation", "inf"}}}}}});
  CHECK(std::isinf(c.data.synthetic->separation));
}

TEST_CASE("merge_json") {
  json base = {{"a", 1}, {"b", {{"c", 2}, {"d", 3}}}};
  merge_json(base, {{"b", {{"c", 5}}}, {"a", nullptr}, {"e", true}});
  CHECK(base["a"] == 1);
  CHECK(base["b"]["c"] == 5);
  CHECK(base["b"]["d"] == 3);
  CHECK(base["e"] == true);
}

TEST_CASE("method specs") {
  CHECK(MethodSpec::parse("pmr:argmax").strategy == StrategyKind::argmax);
  CHECK(MethodSpec::parse("pmr_mix").label() == "pmr_mix");
  CHECK(MethodSpec::parse("sequential").label() == "sequential");
  CHECK_THROWS_AS(MethodSpec::parse("pmr:closest"), ConfigError);
}

TEST_CASE("order_tasks") {
  SeedEnv env(nullptr);
  AppConfig c = load_config(std::nullopt, {{"data", {{"synthetic", {{"samples_per_class", 4}, {"test_per_class", 2}}}}}});
  const auto tasks = load_tasks(c);
  const auto o3 = order_tasks(tasks, 3);
  CHECK(o3[0].name == "amazon");
  CHECK(o3[1].name == "yelp");
  CHECK(o3[2].name == "agnews");
  CHECK_THROWS_AS(order_tasks(tasks, 0), ConfigError);
  CHECK_THROWS_AS(order_tasks(tasks, 7), ConfigError);
}

TEST_CASE("csv tasks load relative to the config file") {
  SeedEnv env(nullptr);
  const auto dir = std::filesystem::temp_directory_path() / "pmr_config_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "train.csv") << "label,text\npos,great stuff\nneg,awful stuff\n";
  std::ofstream(dir / "test.csv") << "label,text\nneg,bad\n";
  const auto path = write_config(
      "csv.json", {{"model", {{"feature_dim", 64}}},
                   {"data", {{"tasks", {{{"name", "mini"}, {"train", "train.csv"}, {"test", "test.csv"}}}}}}});
  const AppConfig c = load_config(path);
  CHECK_FALSE(c.data.synthetic.has_value());
  const auto tasks = load_tasks(c);
  REQUIRE(tasks.size() == 1);
  CHECK(tasks[0].class_names == std::vector<std::string>{"neg", "pos"});
  CHECK(tasks[0].test.size() == 1);
  CHECK(tasks[0].test[0].label == 0);
  CHECK(tasks[0].train[0].features.dim == 64);
}
