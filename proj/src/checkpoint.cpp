#include "pmr/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pmr/error.hpp"

namespace pmr {

using nlohmann::json;

struct CheckpointAccess {
  static Rng& rng(PmrModel& m) { return m.init_rng_; }
  static const Rng& rng(const PmrModel& m) { return m.init_rng_; }
};

namespace {

constexpr const char* kFormat = "pmr-checkpoint";
constexpr int kVersion = 1;

json group_to_json(const ParamGroup& g) {
  json out = json::object();
  for (const auto& p : g.params()) out[p.name] = {{"rows", p.rows}, {"cols", p.cols}, {"values", p.value}};
  return out;
}

void group_from_json(ParamGroup& g, const json& j) {
  for (auto& p : g.params()) {
    if (!j.contains(p.name)) throw InputError("checkpoint is missing parameter " + g.name() + "/" + p.name);
    const auto& e = j.at(p.name);
    p.rows = e.at("rows").get<std::size_t>();
    p.cols = e.at("cols").get<std::size_t>();
    p.value = e.at("values").get<std::vector<double>>();
    if (p.value.size() != p.rows * p.cols) throw InputError("checkpoint parameter " + p.name + " has wrong size");
    p.grad.clear();
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PmrModel& model) {
  const auto& c = model.config();
  std::ostringstream rng_state;
  rng_state << CheckpointAccess::rng(model);
  json j = {
      {"format", kFormat},
      {"version", kVersion},
      {"config",
       {{"feature_dim", c.feature_dim},
        {"embed_dim", c.embed_dim},
        {"proto_hidden", c.proto_hidden},
        {"proto_dim", c.proto_dim},
        {"dropout", c.dropout},
        {"distance", std::string(distance_name(c.distance))}}},
      {"config_hash", std::to_string(c.hash())},
      {"num_classes", model.num_classes()},
      {"init_rng", rng_state.str()},
      {"groups",
       {{model.encoder().name(), group_to_json(model.encoder())},
        {model.proto_head().name(), group_to_json(model.proto_head())},
        {model.pred_head().name(), group_to_json(model.pred_head())}}},
  };
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << j.dump();
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

PmrModel load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != kFormat) throw InputError("not a pmr checkpoint: " + path.string());

  const auto& jc = j.at("config");
  ModelConfig c;
  c.feature_dim = jc.at("feature_dim").get<std::size_t>();
  c.embed_dim = jc.at("embed_dim").get<std::size_t>();
  c.proto_hidden = jc.at("proto_hidden").get<std::size_t>();
  c.proto_dim = jc.at("proto_dim").get<std::size_t>();
  c.dropout = jc.at("dropout").get<double>();
  c.distance = parse_distance(jc.at("distance").get<std::string>());

  if (c.feature_dim != expected.feature_dim) {
    throw InputError("checkpoint feature/hash dim " + std::to_string(c.feature_dim) + " != expected " +
                     std::to_string(expected.feature_dim));
  }
  if (c.embed_dim != expected.embed_dim) {
    throw InputError("checkpoint embedding dim " + std::to_string(c.embed_dim) + " != expected " +
                     std::to_string(expected.embed_dim));
  }
  if (j.at("config_hash").get<std::string>() != std::to_string(expected.hash())) {
    throw InputError("checkpoint config hash does not match the expected model config");
  }

  PmrModel model(c, 0);
  const std::size_t n = j.at("num_classes").get<std::size_t>();
  if (n > 0) {
    std::vector<int> labels{static_cast<int>(n) - 1};
    model.register_classes(labels);
  }
  const auto& groups = j.at("groups");
  group_from_json(model.encoder(), groups.at(model.encoder().name()));
  group_from_json(model.proto_head(), groups.at(model.proto_head().name()));
  group_from_json(model.pred_head(), groups.at(model.pred_head().name()));
  std::istringstream rng_state(j.at("init_rng").get<std::string>());
  rng_state >> CheckpointAccess::rng(model);
  return model;
}

}  // namespace pmr
