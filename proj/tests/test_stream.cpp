#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "pmr/error.hpp"
#include "pmr/stream.hpp"

using namespace pmr;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path, std::ios::binary) << content;
  return path;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

SynthSpec small_spec() {
  SynthSpec s = SynthSpec::benchmark_like();
  s.samples_per_class = 40;
  s.test_per_class = 10;
  return s;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("Hello, World! it's 42") == std::vector<std::string>{"hello", "world", "it", "s", "42"});
  CHECK(tokenize("  ").empty());
  CHECK(tokenize("caf\xc3\xa9 ok") == std::vector<std::string>{"caf\xc3\xa9", "ok"});
}

TEST_CASE("feature hashing matches an independent FNV-1a") {
  for (const char* s : {"", "a", "foobar", "the quick brown fox"}) CHECK(fnv1a64(s) == oracle::fnv1a(s));
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);

  const std::vector<std::string> toks{"good", "bad", "good", "meh"};
  const auto v = hash_features(toks, 64);
  std::map<std::uint32_t, double> want;
  for (const auto& t : toks) want[static_cast<std::uint32_t>(oracle::fnv1a(t) % 64)] += 1.0;
  REQUIRE(v.nnz() == want.size());
  std::size_t i = 0;
  for (const auto& [idx, count] : want) {
    CHECK(v.index[i] == idx);
    CHECK(v.value[i] == count);
    ++i;
  }
  CHECK(v.dim == 64);
  CHECK_THROWS_AS(hash_features(toks, 0), ConfigError);
}

TEST_CASE("parse_csv") {
  const auto recs = parse_csv("a,b\n1,\"x, \"\"y\"\"\"\n\n2,\"multi\nline\"\n3,z\n", "t.csv");
  REQUIRE(recs.size() == 4);
  CHECK(recs[1].fields == std::vector<std::string>{"1", "x, \"y\""});
  CHECK(recs[2].fields[1] == "multi\nline");
  CHECK(recs[2].line == 4);
  CHECK(recs[3].line == 6);
  CHECK(error_of([] { parse_csv("a\n\"open\n", "t.csv"); }).find("t.csv:2") != std::string::npos);
  CHECK(error_of([] { parse_csv("a\nx\"y\n", "t.csv"); }).find("t.csv:2") != std::string::npos);
  CHECK(error_of([] { parse_csv("a\n\"x\"y\n", "t.csv"); }).find("t.csv:2") != std::string::npos);
}

TEST_CASE("ingest_csv") {
  const auto good = write_temp("pmr_ingest_good.csv", "label,title,body\npos,Nice,Loved it\nneg,Bad,\"Hated, it\"\n");
  CsvSchema schema;
  schema.text_columns = {"title", "body"};
  schema.hash_dim = 128;
  std::vector<std::string> classes;
  const auto ex = ingest_csv(good, schema, "demo", &classes);
  CHECK(classes == std::vector<std::string>{"neg", "pos"});
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].id == "demo:1");
  CHECK(ex[0].label == 1);
  CHECK(ex[1].label == 0);
  CHECK(ex[1].tokens == std::vector<std::string>{"bad", "hated", "it"});
  CHECK(ex[1].features.dim == 128);

  SUBCASE("unknown label cites its line") {
    CsvSchema fixed = schema;
    fixed.classes = {"pos"};
    CHECK(error_of([&] { ingest_csv(good, fixed, "demo", &classes); }).find(":3") != std::string::npos);
  }
  SUBCASE("missing column") {
    CsvSchema other = schema;
    other.label_column = "stars";
    CHECK_THROWS_AS(ingest_csv(good, other, "demo", &classes), InputError);
  }
  SUBCASE("ragged row") {
    const auto bad = write_temp("pmr_ingest_bad.csv", "label,text\npos,a\nneg\n");
    CsvSchema s;
    CHECK(error_of([&] { ingest_csv(bad, s, "x", &classes); }).find(":3") != std::string::npos);
    std::filesystem::remove(bad);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(ingest_csv("/nonexistent/pmr.csv", schema, "x", &classes), IoError);
  }
  std::filesystem::remove(good);
}

TEST_CASE("label registry shares ids within a label space") {
  auto tasks = synth_tasks(small_spec());
  LabelRegistry reg;
  const auto yelp = reg.register_task(tasks[0]);
  const auto news = reg.register_task(tasks[1]);
  const auto amazon = reg.register_task(tasks[2]);
  CHECK(yelp == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(news == std::vector<int>{5, 6, 7, 8});
  CHECK(amazon == yelp);
  CHECK(reg.size() == 9);
  for (const auto& ex : tasks[1].train) CHECK((ex.label >= 5 && ex.label <= 8));
  CHECK_THROWS_AS(reg.register_task(tasks[0]), ConfigError);
  CHECK_THROWS_AS(reg.ids_for("sentiment", 3), ConfigError);

  // Registering in another order assigns ids by first appearance.
  auto again = synth_tasks(small_spec());
  LabelRegistry r2;
  CHECK(r2.register_task(again[1]) == std::vector<int>{0, 1, 2, 3});
  CHECK(r2.register_task(again[2]) == std::vector<int>{4, 5, 6, 7, 8});
}

TEST_CASE("task stream batches") {
  auto tasks = synth_tasks(small_spec());
  LabelRegistry reg;
  for (auto& t : tasks) reg.register_task(t);
  TaskStream stream(tasks, 5, 7);
  CHECK(stream.batch_size(0) == 25);
  CHECK(stream.batch_size(1) == 20);

  std::set<std::string> seen;
  std::size_t batches = 0;
  while (auto b = stream.next_batch(1)) {
    std::map<int, int> per;
    for (const auto& ex : *b) {
      CHECK(seen.insert(ex.id).second);
      ++per[ex.label];
    }
    if (b->size() == 20) {
      for (const auto& [l, c] : per) CHECK(c == 5);
    }
    ++batches;
  }
  CHECK(batches == 8);
  CHECK(stream.exhausted(1));
  CHECK(stream.consumed(1) == 160);
  CHECK(stream.remaining(1) == 0);
  CHECK(seen.size() == tasks[1].train.size());
  CHECK(stream.ledger().size() == 160);

  // Unregistered tasks cannot be streamed.
  auto raw = synth_tasks(small_spec());
  CHECK_THROWS_AS(TaskStream(raw, 5, 1), ConfigError);
}

TEST_CASE("task stream with a short class yields a ragged batch") {
  auto tasks = synth_tasks(small_spec());
  // Drop most of class 0.
  std::vector<Example> kept;
  int dropped = 0;
  for (auto& ex : tasks[1].train) {
    if (ex.label == 0 && dropped < 33) {
      ++dropped;
      continue;
    }
    kept.push_back(ex);
  }
  tasks[1].train = kept;
  LabelRegistry reg;
  reg.register_task(tasks[1]);
  std::vector<TaskData> one{tasks[1]};
  TaskStream stream(one, 5, 3);
  CHECK(stream.next_batch(0)->size() == 20);
  const auto ragged = stream.next_batch(0);
  REQUIRE(ragged.has_value());
  CHECK(ragged->size() == 2 + 15);
  CHECK(stream.exhausted(0));
  CHECK_FALSE(stream.next_batch(0).has_value());
}

TEST_CASE("stream order is deterministic in the seed") {
  auto tasks = synth_tasks(small_spec());
  LabelRegistry reg;
  for (auto& t : tasks) reg.register_task(t);
  TaskStream a(tasks, 5, 11), b(tasks, 5, 11), c(tasks, 5, 12);
  const auto ba = a.next_batch(0), bb = b.next_batch(0), bc = c.next_batch(0);
  std::vector<std::string> ia, ib, ic;
  for (const auto& e : *ba) ia.push_back(e.id);
  for (const auto& e : *bb) ib.push_back(e.id);
  for (const auto& e : *bc) ic.push_back(e.id);
  CHECK(ia == ib);
  CHECK(ia != ic);
  CHECK(a.manifest() == b.manifest());
}

TEST_CASE("order permutations") {
  const auto o = order_permutations(3);
  REQUIRE(o.size() == 6);
  const std::vector<std::vector<std::size_t>> want{{0, 1, 2}, {0, 2, 1}, {2, 0, 1}, {2, 1, 0}, {1, 0, 2}, {1, 2, 0}};
  CHECK(o == want);
  CHECK(order_permutations(2).size() == 2);
  CHECK(order_permutations(4).size() == 24);
}

TEST_CASE("synthetic tasks") {
  const SynthSpec spec = small_spec();
  const auto a = synth_tasks(spec);
  const auto b = synth_tasks(spec);
  REQUIRE(a.size() == 3);
  CHECK(a[0].name == "yelp");
  CHECK(a[1].name == "agnews");
  CHECK(a[2].name == "amazon");
  CHECK(a[0].label_space == a[2].label_space);
  CHECK(a[0].label_space != a[1].label_space);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(a[k].train.size() == a[k].num_classes() * 40);
    CHECK(a[k].test.size() == a[k].num_classes() * 10);
    for (std::size_t i = 0; i < a[k].train.size(); ++i) {
      CHECK(a[k].train[i].id == b[k].train[i].id);
      CHECK(a[k].train[i].tokens == b[k].train[i].tokens);
    }
  }
  CHECK(a[0].train[0].id == "yelp:train:0");
  CHECK(a[1].test[0].id == "agnews:test:0");

  SynthSpec bad = spec;
  bad.separation = 0.0;
  CHECK_THROWS_AS(synth_tasks(bad), ConfigError);
  bad = spec;
  bad.tasks.clear();
  CHECK_THROWS_AS(synth_tasks(bad), ConfigError);
  bad = spec;
  bad.vocab_size = 10;
  CHECK_THROWS_AS(synth_tasks(bad), ConfigError);
}

TEST_CASE("synthetic classes are separable by a nearest-centroid probe") {
  SynthSpec spec = small_spec();
  spec.separation = std::numeric_limits<double>::infinity();
  const auto tasks = synth_tasks(spec);
  for (const auto& t : tasks) {
    // Centroids of dense hashed features, then nearest centroid on test.
    std::vector<std::vector<double>> cent(t.num_classes(), std::vector<double>(spec.hash_dim, 0.0));
    std::vector<double> n(t.num_classes(), 0.0);
    for (const auto& ex : t.train) {
      for (std::size_t i = 0; i < ex.features.nnz(); ++i) cent[ex.label][ex.features.index[i]] += ex.features.value[i];
      n[ex.label] += 1.0;
    }
    for (std::size_t c = 0; c < cent.size(); ++c)
      for (double& v : cent[c]) v /= n[c];
    std::size_t right = 0;
    for (const auto& ex : t.test) {
      std::vector<double> x(spec.hash_dim, 0.0);
      for (std::size_t i = 0; i < ex.features.nnz(); ++i) x[ex.features.index[i]] = ex.features.value[i];
      std::size_t best = 0;
      for (std::size_t c = 1; c < cent.size(); ++c)
        if (oracle::sq_dist(x, cent[c]) < oracle::sq_dist(x, cent[best])) best = c;
      right += static_cast<int>(best) == ex.label;
    }
    CHECK(static_cast<double>(right) / static_cast<double>(t.test.size()) > 0.95);
  }
}
