#include <doctest.h>

#include <set>

#include "pmr/error.hpp"
#include "pmr/log.hpp"
#include "pmr/trainer.hpp"

using namespace pmr;

namespace {

SynthSpec tiny_spec() {
  SynthSpec s = SynthSpec::benchmark_like();
  s.samples_per_class = 60;
  s.test_per_class = 10;
  s.hash_dim = 256;
  s.vocab_size = 1200;
  return s;
}

RunConfig tiny_config() {
  RunConfig c;
  c.model.feature_dim = 256;
  c.model.embed_dim = 12;
  c.model.proto_hidden = 10;
  c.model.proto_dim = 6;
  c.support_batches = 2;
  c.replay_period = 2;
  c.outer_lr = 1e-2;
  c.inner_lr = 0.1;
  return c;
}

struct Hashes {
  std::uint64_t encoder, proto, head;
  explicit Hashes(PmrModel& m)
      : encoder(m.encoder().value_hash()), proto(m.proto_head().value_hash()), head(m.pred_head().value_hash()) {}
};

}  // namespace

TEST_CASE("zero learning rates leave every parameter bit-identical") {
  log::set_quiet(true);
  RunConfig c = tiny_config();
  c.inner_lr = 0.0;
  c.outer_lr = 0.0;
  Trainer t(c, synth_tasks(tiny_spec()));
  t.begin_task(0);
  const Hashes before(t.model());
  std::size_t n = 0;
  while (t.train_episode()) ++n;
  CHECK(n >= 4);
  const Hashes after(t.model());
  CHECK(after.encoder == before.encoder);
  CHECK(after.proto == before.proto);
  CHECK(after.head == before.head);
}

TEST_CASE("the inner step never moves the encoder or the final head") {
  log::set_quiet(true);
  RunConfig c = tiny_config();
  c.outer_lr = 0.0;
  Trainer t(c, synth_tasks(tiny_spec()));
  t.begin_task(0);
  const Hashes before(t.model());
  REQUIRE(t.train_episode());
  const Hashes after(t.model());
  // w is restored before the (zero) outer step; the prototype head keeps its
  // inner update.
  CHECK(after.encoder == before.encoder);
  CHECK(after.head == before.head);
  CHECK(after.proto != before.proto);
}

TEST_CASE("inner_w_only keeps the prototype head out of the inner step") {
  log::set_quiet(true);
  RunConfig c = tiny_config();
  c.outer_lr = 0.0;
  c.inner_w_only = true;
  Trainer t(c, synth_tasks(tiny_spec()));
  t.begin_task(0);
  const Hashes before(t.model());
  REQUIRE(t.train_episode());
  CHECK(Hashes(t.model()).proto == before.proto);
}

TEST_CASE("replay episodes draw m batches, others m + 1") {
  log::set_quiet(true);
  RunConfig c = tiny_config();
  Trainer t(c, synth_tasks(tiny_spec()));
  t.begin_task(0);
  const std::size_t b = t.current_batch_size();
  CHECK(b == 25);
  std::size_t replays = 0;
  while (true) {
    const std::size_t before = t.stream().consumed(0);
    const auto rec = t.train_episode();
    if (!rec) break;
    const std::size_t drawn = t.stream().consumed(0) - before;
    CHECK(rec->consumed == drawn);
    if (rec->replay) {
      ++replays;
      CHECK(drawn == c.support_batches * b);
      CHECK(rec->memory_reads == t.memory().read_all().size());
    } else {
      CHECK(drawn == (c.support_batches + 1) * b);
      CHECK(rec->memory_reads == 0);
    }
    CHECK(rec->replay == (rec->index % c.replay_period == 0));
    // Write bound.
    CHECK(t.memory().size() <= c.memory_budget);
    for (const auto& [cls, slot] : t.memory().slots()) CHECK(slot.size() <= c.per_class_cap);
  }
  CHECK(replays > 0);
}

TEST_CASE("target rate picks the period per task") {
  log::set_quiet(true);
  RunConfig c = tiny_config();
  c.target_rate = 10.0;
  Trainer t(c, synth_tasks(tiny_spec()));
  t.begin_task(0);
  // 25 stored (5 classes x 5), b = 25, m = 2: 100*25 / (75 R + 50), nearest
  // to 10% at R = 3.
  CHECK(t.current_period() == 3);
}

TEST_CASE("runs are deterministic and single-pass") {
  log::set_quiet(true);
  RunConfig c = tiny_config();
  log::take_warnings();
  const auto a = Trainer(c, synth_tasks(tiny_spec())).run();
  const auto b = Trainer(c, synth_tasks(tiny_spec())).run();
  CHECK(a.to_json().dump() == b.to_json().dump());

  std::set<std::string> ids(a.ledger.stream.begin(), a.ledger.stream.end());
  CHECK(ids.size() == a.ledger.stream.size());
  CHECK(a.ledger.memory_reads == a.ledger.memory_ids.size());
  std::size_t reads = 0;
  for (const auto& e : a.episodes) reads += e.memory_reads;
  CHECK(reads == a.ledger.memory_reads);
  CHECK(a.matrix.row_complete(2));
  CHECK(a.final_acc() >= 0.0);

  c.seed = 2;
  const auto other = Trainer(c, synth_tasks(tiny_spec())).run();
  CHECK(other.to_json().dump() != a.to_json().dump());
}

TEST_CASE("meta inference with a zero step equals plain prediction") {
  log::set_quiet(true);
  RunConfig c = tiny_config();
  c.inference_lr = 0.0;
  Trainer t(c, synth_tasks(tiny_spec()));
  t.begin_task(0);
  for (int i = 0; i < 3; ++i) REQUIRE(t.train_episode());
  REQUIRE_FALSE(t.memory().empty());
  const auto& test = t.stream().task(0).test;
  CHECK(t.meta_infer(test, 25) == t.plain_accuracy(test));
}

TEST_CASE("meta inference leaves the trained model untouched") {
  log::set_quiet(true);
  RunConfig c = tiny_config();
  c.inference_lr = 0.5;
  Trainer t(c, synth_tasks(tiny_spec()));
  t.begin_task(0);
  for (int i = 0; i < 3; ++i) REQUIRE(t.train_episode());
  const Hashes before(t.model());
  t.meta_infer(t.stream().task(0).test, 25);
  CHECK(Hashes(t.model()).head == before.head);
}

TEST_CASE("sequential fine-tuning forgets the first task") {
  log::set_quiet(true);
  RunConfig c = tiny_config();
  c.method = Method::sequential;
  c.outer_lr = 3e-2;
  SynthSpec s = tiny_spec();
  s.samples_per_class = 200;
  auto tasks = synth_tasks(s);
  // agnews then yelp: disjoint label spaces.
  std::vector<TaskData> ordered{tasks[1], tasks[0]};
  const auto r = Trainer(c, ordered).run();
  const double first = *r.matrix.get(0, 0);
  const double after = *r.matrix.get(1, 0);
  CHECK(first > 0.8);
  CHECK(after < first - 0.3);
}

TEST_CASE("a-gem and random replay run end to end") {
  log::set_quiet(true);
  for (Method m : {Method::agem, Method::random_replay}) {
    RunConfig c = tiny_config();
    c.method = m;
    const auto r = Trainer(c, synth_tasks(tiny_spec())).run();
    CHECK(r.matrix.row_complete(2));
    CHECK(r.ledger.memory_reads > 0);
    for (const auto& [cls, slot] : r.final_memory["classes"].items()) CHECK(slot["samples"].size() <= 5);
  }
}

TEST_CASE("config validation") {
  RunConfig c = tiny_config();
  c.inner_lr = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.support_batches = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.outer_lr = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_method("agem") == Method::agem);
  CHECK_THROWS_AS(parse_method("ewc"), ConfigError);
  CHECK(parse_inner_schedule("full") == InnerSchedule::full);
}

TEST_CASE("trainer state errors") {
  log::set_quiet(true);
  Trainer t(tiny_config(), synth_tasks(tiny_spec()));
  CHECK_THROWS_AS(t.train_episode(), StateError);
  CHECK_THROWS_AS(t.finish_task(), StateError);
}
