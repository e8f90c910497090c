#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "pmr/error.hpp"
#include "pmr/proto_memory.hpp"
#include "pmr/strategy.hpp"

using namespace pmr;

namespace {

// Examples carry their 2-d embedding directly in the feature values, so the
// embedder used by these tests never touches a model.
Example point(const std::string& id, int label, double x, double y) {
  Example ex;
  ex.id = id;
  ex.label = label;
  ex.features.dim = 2;
  ex.features.index = {0, 1};
  ex.features.value = {x, y};
  ex.tokens = {id};
  return ex;
}

const Embedder kEmbed = [](const Example& ex) { return ex.features.value; };

void set_proto(ReplayMemory& mem, int cls, double x, double y) { mem.prototypes().set(Prototype{cls, {x, y}, 0}); }

std::vector<std::string> slot_ids(const ReplayMemory& mem, int cls) {
  std::vector<std::string> ids;
  if (const auto* s = mem.slot(cls))
    for (const auto& e : *s) ids.push_back(e.example.id);
  return ids;
}

}  // namespace

TEST_CASE("compute_prototype is the mean eval-mode embedding") {
  ModelConfig c;
  c.feature_dim = 12;
  c.embed_dim = 5;
  c.proto_hidden = 6;
  c.proto_dim = 3;
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    PmrModel model(c, 100 + t);
    std::vector<Example> items;
    const std::size_t k = 1 + uniform_index(rng, 6);
    for (std::size_t i = 0; i < k; ++i) {
      Example ex;
      ex.id = std::to_string(i);
      ex.features.dim = 12;
      for (std::uint32_t f = 0; f < 12; ++f)
        if (uniform01(rng) < 0.5) {
          ex.features.index.push_back(f);
          ex.features.value.push_back(uniform(rng, 0.0, 3.0));
        }
      items.push_back(ex);
    }
    std::vector<const Example*> support;
    std::vector<std::vector<double>> rows;
    for (const auto& ex : items) {
      support.push_back(&ex);
      // Eval-mode prototype head by hand: W2 relu(W1 h + b1) + b2.
      const auto h = model.encode(ex.features);
      const Param& W1 = model.proto_head().find("W1");
      const Param& b1 = model.proto_head().find("b1");
      const Param& W2 = model.proto_head().find("W2");
      const Param& b2 = model.proto_head().find("b2");
      auto z = oracle::matvec(W1.value, W1.rows, W1.cols, h, b1.value);
      for (double& v : z) v = std::max(v, 0.0);
      rows.push_back(oracle::matvec(W2.value, W2.rows, W2.cols, z, b2.value));
    }
    const Prototype p = compute_prototype(3, support, model, 7);
    CHECK(p.class_id == 3);
    CHECK(p.updated_at == 7);
    const auto want = oracle::mean_rows(rows);
    double err = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) err = std::max(err, std::abs(p.vector[i] - want[i]));
    CHECK(err < 1e-9);
  }
  std::vector<const Example*> none;
  PmrModel model(c, 1);
  CHECK_THROWS_AS(compute_prototype(0, none, model, 0), InputError);
}

TEST_CASE("prototype registry keeps the last write") {
  PrototypeRegistry reg;
  reg.set(Prototype{1, {0.0}, 1});
  reg.set(Prototype{1, {2.0}, 4});
  CHECK(reg.size() == 1);
  CHECK(reg.at(1).vector[0] == 2.0);
  CHECK(reg.at(1).updated_at == 4);
  CHECK(reg.find(2) == nullptr);
  CHECK_THROWS_AS(reg.at(2), StateError);
}

TEST_CASE("KNN write matches brute force") {
  Rng rng(22);
  for (int t = 0; t < 1000; ++t) {
    ReplayMemory mem(5, 45);
    set_proto(mem, 0, uniform(rng, -1, 1), uniform(rng, -1, 1));
    const auto& pv = mem.prototypes().at(0).vector;
    std::vector<std::pair<std::string, double>> pool;
    // A few rounds so stored samples compete with new candidates.
    for (int round = 0; round < 3; ++round) {
      std::vector<Example> cands;
      const std::size_t k = uniform_index(rng, 9);
      for (std::size_t i = 0; i < k; ++i) {
        // Coarse grid so ties are common.
        const double x = std::round(uniform(rng, -2, 2) * 2) / 2, y = std::round(uniform(rng, -2, 2) * 2) / 2;
        const int label = uniform01(rng) < 0.8 ? 0 : 1;
        cands.push_back(point("r" + std::to_string(round) + "_" + std::to_string(i), label, x, y));
      }
      // Oracle pool: stored first, then class-0 candidates.
      std::vector<std::pair<std::string, double>> next;
      for (const auto& id : slot_ids(mem, 0)) {
        for (const auto& [pid, d] : pool)
          if (pid == id) next.emplace_back(pid, d);
      }
      for (const auto& c : cands)
        if (c.label == 0) next.emplace_back(c.id, oracle::sq_dist(c.features.value, pv));
      const auto want = oracle::knn(next, 5, false);
      pool = next;

      mem.write_samples(0, cands, kEmbed, 5);
      CHECK(slot_ids(mem, 0) == want);
      if (const auto* slot = mem.slot(0))
        for (const auto& s : *slot) CHECK(s.distance.has_value());
    }
    CHECK(mem.slot(1) == nullptr);
  }
}

TEST_CASE("KNN write is idempotent and rejects a missing prototype") {
  ReplayMemory mem(3, 45);
  set_proto(mem, 0, 0, 0);
  std::vector<Example> c{point("a", 0, 1, 0), point("b", 0, 2, 0), point("c", 0, 0.5, 0), point("d", 0, 3, 0)};
  mem.write_samples(0, c, kEmbed, 3);
  const auto first = slot_ids(mem, 0);
  CHECK(first == std::vector<std::string>{"c", "a", "b"});
  mem.write_samples(0, c, kEmbed, 3);
  CHECK(slot_ids(mem, 0) == first);
  CHECK(mem.size() == 3);
  CHECK_THROWS_AS(mem.write_samples(4, c, kEmbed, 3), StateError);
}

TEST_CASE("farthest selection and transient outliers") {
  ReplayMemory mem(2, 45);
  set_proto(mem, 0, 0, 0);
  std::vector<Example> c{point("a", 0, 1, 0), point("b", 0, 2, 0), point("c", 0, 0.5, 0), point("d", 0, 3, 0)};
  mem.write_outliers(0, c, kEmbed, 2, false);
  CHECK(slot_ids(mem, 0) == std::vector<std::string>{"d", "b"});

  ReplayMemory mix(2, 45);
  set_proto(mix, 0, 0, 0);
  Rng rng(1);
  CandidatePool pool{{0, c}};
  select_and_write(StrategyKind::mix, mix, pool, kEmbed, 2, rng);
  CHECK(slot_ids(mix, 0) == std::vector<std::string>{"c", "a"});
  CHECK(mix.size() == 2);
  CHECK(mix.outlier_size() == 2);
  // Main slots first, then outliers.
  std::vector<std::string> ids;
  for (const auto& e : mix.read_all()) ids.push_back(e.id);
  CHECK(ids == std::vector<std::string>{"c", "a", "d", "b"});
  mix.end_task();
  CHECK(mix.outlier_size() == 0);
  CHECK(mix.size() == 2);
}

TEST_CASE("read_all orders by class then stored order") {
  ReplayMemory mem(2, 45);
  set_proto(mem, 0, 0, 0);
  set_proto(mem, 5, 0, 0);
  std::vector<Example> c{point("x", 5, 1, 0), point("y", 5, 0.1, 0), point("z", 0, 0.2, 0)};
  mem.write_samples(5, c, kEmbed, 2);
  mem.write_samples(0, c, kEmbed, 2);
  std::vector<std::string> ids;
  for (const auto& e : mem.read_all()) ids.push_back(e.id);
  CHECK(ids == std::vector<std::string>{"z", "y", "x"});
}

TEST_CASE("capacity respects the per-class cap and the budget") {
  ReplayMemory mem(5, 12);
  std::vector<Example> c;
  for (int i = 0; i < 8; ++i) c.push_back(point("p" + std::to_string(i), 0, i, 0));
  for (int cls = 0; cls < 4; ++cls) {
    set_proto(mem, cls, 0, 0);
    for (auto& e : c) e.label = cls;
    for (auto& e : c) e.id = std::to_string(cls) + "_" + e.id.substr(e.id.find('p'));
    mem.write_samples(cls, c, kEmbed, 5);
  }
  CHECK(mem.slot(0)->size() == 5);
  CHECK(mem.slot(1)->size() == 5);
  CHECK(mem.slot(2)->size() == 2);
  CHECK(mem.slot(3) == nullptr);
  CHECK(mem.size() == 12);
  CHECK(mem.capacity_for(0, 5) == 5);
  CHECK(mem.capacity_for(3, 5) == 0);
  CHECK(mem.capacity_for(0, 3) == 3);
}

TEST_CASE("fuzzed writes never exceed capacity or duplicate ids") {
  Rng rng(23);
  ReplayMemory mem(5, 45);
  for (int cls = 0; cls < 14; ++cls) set_proto(mem, cls, uniform(rng, -1, 1), uniform(rng, -1, 1));
  std::size_t writes = 0;
  while (writes < 10000) {
    CandidatePool pool;
    for (int i = 0; i < 20; ++i) {
      const int cls = static_cast<int>(uniform_index(rng, 14));
      pool[cls].push_back(point("e" + std::to_string(uniform_index(rng, 3000)), cls, uniform(rng, -3, 3),
                                uniform(rng, -3, 3)));
    }
    const StrategyKind kinds[] = {StrategyKind::argmin, StrategyKind::argmax, StrategyKind::mix,
                                  StrategyKind::random};
    select_and_write(kinds[uniform_index(rng, 4)], mem, pool, kEmbed, 5, rng);
    writes += pool.size();
    CHECK(mem.size() <= 45);
    for (const auto& [cls, slot] : mem.slots()) {
      CHECK(slot.size() <= 5);
      std::set<std::string> ids;
      for (const auto& s : slot) {
        CHECK(s.example.label == cls);
        ids.insert(s.example.id);
      }
      CHECK(ids.size() == slot.size());
    }
    if (uniform01(rng) < 0.1) mem.end_task();
  }
}

TEST_CASE("snapshot lists every stored sample") {
  ReplayMemory mem(2, 45);
  set_proto(mem, 1, 0, 0);
  std::vector<Example> c{point("a", 1, 1, 0), point("b", 1, 2, 0)};
  mem.write_samples(1, c, kEmbed, 2);
  const auto snap = mem.snapshot_json();
  CHECK(snap.dump().find("\"a\"") != std::string::npos);
  CHECK(snap.dump().find("\"b\"") != std::string::npos);
}
