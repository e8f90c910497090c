#include "pmr/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>

#include "pmr/error.hpp"
#include "pmr/log.hpp"

namespace pmr {

std::string MethodSpec::label() const {
  if (method == Method::pmr) return "pmr_" + std::string(strategy_name(strategy));
  return std::string(method_name(method));
}

MethodSpec MethodSpec::parse(std::string_view text) {
  MethodSpec m;
  const auto sep = text.find_first_of(":_");
  if (text.substr(0, sep) == "pmr") {
    m.method = Method::pmr;
    if (sep != std::string_view::npos) m.strategy = parse_strategy(text.substr(sep + 1));
    return m;
  }
  m.method = parse_method(text);
  m.strategy = StrategyKind::random;
  return m;
}

nlohmann::json default_config_json() {
  const RunConfig run;
  nlohmann::json j = run.to_json();
  const SynthSpec synth = SynthSpec::benchmark_like();
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : synth.tasks) tasks.push_back({{"name", t.name}, {"classes", t.classes}, {"label_space", t.label_space}});
  j["data"] = {{"synthetic",
                {{"tasks", tasks},
                 {"samples_per_class", synth.samples_per_class},
                 {"test_per_class", synth.test_per_class},
                 {"separation", synth.separation},
                 {"vocab_size", synth.vocab_size},
                 {"topic_tokens", synth.topic_tokens},
                 {"domain_tokens", synth.domain_tokens},
                 {"domain_share", synth.domain_share},
                 {"doc_length", synth.doc_length},
                 {"seed", synth.seed}}}};
  const BenchConfig bench;
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : bench.methods) methods.push_back(m.label());
  nlohmann::json strategies = nlohmann::json::array();
  for (auto s : bench.strategies) strategies.push_back(strategy_name(s));
  j["bench"] = {{"orders", bench.orders}, {"seeds", bench.seeds}, {"methods", methods}, {"strategies", strategies}};
  return j;
}

void merge_json(nlohmann::json& base, const nlohmann::json& patch) {
  if (patch.is_null()) return;
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it.value().is_null()) {
      if (!base.contains(it.key())) base[it.key()] = nullptr;
      continue;
    }
    if (base.contains(it.key())) {
      merge_json(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

namespace {

void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("unknown config key '" + where + it.key() + "'");
  }
}

template <typename T>
T get(const nlohmann::json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + where + key + "': " + e.what());
  }
}

std::optional<double> get_optional(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return get<double>(obj, key, where);
}

std::size_t get_size(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key '" + where + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

SynthSpec parse_synth(const nlohmann::json& j) {
  check_keys(j,
             {"tasks", "samples_per_class", "test_per_class", "separation", "vocab_size", "topic_tokens",
              "domain_tokens", "domain_share", "doc_length", "seed"},
             "data.synthetic.");
  const std::string w = "data.synthetic.";
  SynthSpec s;
  for (const auto& t : j.at("tasks")) {
    check_keys(t, {"name", "classes", "label_space"}, w + "tasks[].");
    s.tasks.push_back(SynthTaskSpec{get<std::string>(t, "name", w), get_size(t, "classes", w),
                                    t.value("label_space", std::string())});
  }
  s.samples_per_class = get_size(j, "samples_per_class", w);
  s.test_per_class = get_size(j, "test_per_class", w);
  // JSON has no infinity; a null or string "inf" separation means disjoint vocabularies.
  const auto& sep = j.at("separation");
  if (sep.is_string() && (sep == "inf" || sep == "infinity")) {
    s.separation = std::numeric_limits<double>::infinity();
  } else {
    s.separation = get<double>(j, "separation", w);
  }
  s.vocab_size = get_size(j, "vocab_size", w);
  s.topic_tokens = get_size(j, "topic_tokens", w);
  s.domain_tokens = get_size(j, "domain_tokens", w);
  s.domain_share = get<double>(j, "domain_share", w);
  s.doc_length = get_size(j, "doc_length", w);
  s.seed = get<std::uint64_t>(j, "seed", w);
  return s;
}

CsvTaskConfig parse_csv_task(const nlohmann::json& t) {
  const std::string w = "data.tasks[].";
  check_keys(t, {"name", "label_space", "train", "test", "label_column", "text_columns", "classes"}, w);
  CsvTaskConfig c;
  c.name = get<std::string>(t, "name", w);
  c.label_space = t.value("label_space", std::string());
  c.train = get<std::string>(t, "train", w);
  c.test = get<std::string>(t, "test", w);
  if (t.contains("label_column")) c.schema.label_column = get<std::string>(t, "label_column", w);
  if (t.contains("text_columns")) c.schema.text_columns = get<std::vector<std::string>>(t, "text_columns", w);
  if (t.contains("classes")) c.schema.classes = get<std::vector<std::string>>(t, "classes", w);
  return c;
}

}  // namespace

AppConfig parse_config(const nlohmann::json& doc) {
  check_keys(doc,
             {"method", "strategy", "order", "seed", "inner_lr", "outer_lr", "inference_lr", "support_batches",
              "per_class_batch", "n_support", "n_query", "inner_schedule", "inner_w_only", "replay", "memory", "model",
              "data", "bench"},
             "");
  AppConfig app;
  RunConfig& r = app.run;
  r.method = parse_method(get<std::string>(doc, "method", ""));
  r.strategy = parse_strategy(get<std::string>(doc, "strategy", ""));
  r.order_id = get_size(doc, "order", "");
  r.seed = get<std::uint64_t>(doc, "seed", "");
  r.inner_lr = get<double>(doc, "inner_lr", "");
  r.outer_lr = get<double>(doc, "outer_lr", "");
  r.inference_lr = get_optional(doc, "inference_lr", "");
  r.support_batches = get_size(doc, "support_batches", "");
  r.per_class_batch = get_size(doc, "per_class_batch", "");
  r.n_support = get_size(doc, "n_support", "");
  r.n_query = get_size(doc, "n_query", "");
  r.inner_schedule = parse_inner_schedule(get<std::string>(doc, "inner_schedule", ""));
  r.inner_w_only = get<bool>(doc, "inner_w_only", "");

  const auto& replay = doc.at("replay");
  check_keys(replay, {"period", "target_rate"}, "replay.");
  r.replay_period = get_size(replay, "period", "replay.");
  r.target_rate = get_optional(replay, "target_rate", "replay.");

  const auto& memory = doc.at("memory");
  check_keys(memory, {"per_class", "budget"}, "memory.");
  r.per_class_cap = get_size(memory, "per_class", "memory.");
  r.memory_budget = get_size(memory, "budget", "memory.");

  const auto& model = doc.at("model");
  check_keys(model, {"feature_dim", "embed_dim", "proto_hidden", "proto_dim", "dropout", "distance"}, "model.");
  r.model.feature_dim = get_size(model, "feature_dim", "model.");
  r.model.embed_dim = get_size(model, "embed_dim", "model.");
  r.model.proto_hidden = get_size(model, "proto_hidden", "model.");
  r.model.proto_dim = get_size(model, "proto_dim", "model.");
  r.model.dropout = get<double>(model, "dropout", "model.");
  r.model.distance = parse_distance(get<std::string>(model, "distance", "model."));
  r.validate();

  const auto& data = doc.at("data");
  check_keys(data, {"synthetic", "tasks"}, "data.");
  const bool has_csv = data.contains("tasks") && !data.at("tasks").is_null();
  const bool has_synth = data.contains("synthetic") && !data.at("synthetic").is_null();
  if (has_csv == has_synth) throw ConfigError("data needs exactly one of 'synthetic' or 'tasks'");
  if (has_synth) {
    app.data.synthetic = parse_synth(data.at("synthetic"));
    app.data.synthetic->hash_dim = r.model.feature_dim;
  } else {
    for (const auto& t : data.at("tasks")) {
      auto c = parse_csv_task(t);
      c.schema.hash_dim = r.model.feature_dim;
      app.data.csv.push_back(std::move(c));
    }
    if (app.data.csv.empty()) throw ConfigError("data.tasks is empty");
  }

  const auto& bench = doc.at("bench");
  check_keys(bench, {"orders", "seeds", "methods", "strategies"}, "bench.");
  app.bench.orders = get<std::vector<std::size_t>>(bench, "orders", "bench.");
  app.bench.seeds = get<std::vector<std::uint64_t>>(bench, "seeds", "bench.");
  app.bench.methods.clear();
  for (const auto& m : get<std::vector<std::string>>(bench, "methods", "bench.")) app.bench.methods.push_back(MethodSpec::parse(m));
  app.bench.strategies.clear();
  for (const auto& s : get<std::vector<std::string>>(bench, "strategies", "bench.")) app.bench.strategies.push_back(parse_strategy(s));
  return app;
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("PMR_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (errno != 0 || *end != '\0' || raw[0] == '-') throw ConfigError(std::string("PMR_SEED is not an unsigned integer: ") + raw);
  return static_cast<std::uint64_t>(v);
}

AppConfig load_config(const std::optional<std::filesystem::path>& path, const nlohmann::json& overrides) {
  nlohmann::json doc = default_config_json();
  std::filesystem::path base = std::filesystem::current_path();
  auto apply = [&doc](const nlohmann::json& patch) {
    // A CSV task list replaces the synthetic default rather than joining it.
    if (patch.is_object() && patch.contains("data") && patch.at("data").is_object() &&
        patch.at("data").contains("tasks")) {
      doc["data"].erase("synthetic");
    }
    merge_json(doc, patch);
  };
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot read config " + path->string());
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config " + path->string() + ": " + e.what());
    }
    apply(file);
    base = path->parent_path();
  }
  if (const auto seed = env_seed()) doc["seed"] = *seed;
  apply(overrides);
  AppConfig app = parse_config(doc);
  app.base_dir = base;
  return app;
}

std::vector<TaskData> load_tasks(const AppConfig& config) {
  if (config.data.synthetic) return synth_tasks(*config.data.synthetic);
  std::vector<TaskData> tasks;
  for (const auto& c : config.data.csv) {
    auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : config.base_dir / p; };
    TaskData t;
    t.name = c.name;
    t.label_space = c.label_space;
    t.train = ingest_csv(resolve(c.train), c.schema, c.name + ":train", &t.class_names);
    CsvSchema test_schema = c.schema;
    test_schema.classes = t.class_names;
    t.test = ingest_csv(resolve(c.test), test_schema, c.name + ":test", nullptr);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

std::vector<TaskData> order_tasks(const std::vector<TaskData>& tasks, std::size_t order_id) {
  const auto perms = order_permutations(tasks.size());
  if (order_id == 0 || order_id > perms.size()) {
    throw ConfigError("order " + std::to_string(order_id) + " out of range 1.." + std::to_string(perms.size()));
  }
  std::vector<TaskData> out;
  for (std::size_t i : perms[order_id - 1]) out.push_back(tasks[i]);
  return out;
}

}  // namespace pmr
