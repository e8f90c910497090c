#include "pmr/stream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "pmr/error.hpp"
#include "pmr/log.hpp"
#include "pmr/random.hpp"

namespace pmr {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
    if (word) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

SparseVector hash_features(const std::vector<std::string>& tokens, std::size_t dim) {
  if (dim == 0) throw ConfigError("hash dimension must be positive");
  std::map<std::uint32_t, double> counts;
  for (const auto& t : tokens) counts[static_cast<std::uint32_t>(fnv1a64(t) % dim)] += 1.0;
  SparseVector v;
  v.dim = dim;
  v.index.reserve(counts.size());
  v.value.reserve(counts.size());
  for (const auto& [i, c] : counts) {
    v.index.push_back(i);
    v.value.push_back(c);
  }
  return v;
}

std::vector<CsvRecord> parse_csv(std::string_view content, const std::string& source) {
  std::vector<CsvRecord> records;
  CsvRecord record;
  std::string field;
  std::size_t line = 1;
  bool in_quotes = false;
  bool field_started = false;  // anything seen for the current record
  bool quoted_field = false;
  record.line = 1;

  auto end_field = [&] {
    record.fields.push_back(std::move(field));
    field.clear();
    quoted_field = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.fields.size() == 1 && record.fields[0].empty();
    if (!blank) records.push_back(std::move(record));
    record = CsvRecord{};
    field_started = false;
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (!field_started) {
      record.line = line;
      field_started = true;
    }
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || quoted_field) {
          throw InputError(source + ":" + std::to_string(line) + ": unexpected quote inside an unquoted field");
        }
        in_quotes = true;
        quoted_field = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        if (quoted_field) {
          throw InputError(source + ":" + std::to_string(line) + ": characters after a closing quote");
        }
        field.push_back(c);
    }
  }
  if (in_quotes) throw InputError(source + ":" + std::to_string(record.line) + ": unterminated quoted field");
  if (field_started) end_record();
  return records;
}

std::vector<Example> ingest_csv(const std::filesystem::path& path, const CsvSchema& schema,
                                const std::string& id_prefix, std::vector<std::string>* class_names) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();
  const std::string source = path.string();

  const auto records = parse_csv(content, source);
  if (records.empty()) throw InputError(source + ": empty file");
  const auto& header = records.front().fields;
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError(source + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_col = column(schema.label_column);
  std::vector<std::size_t> text_cols;
  for (const auto& c : schema.text_columns) text_cols.push_back(column(c));
  if (records.size() == 1) throw InputError(source + ": no data rows");

  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].fields.size() != header.size()) {
      throw InputError(source + ":" + std::to_string(records[r].line) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(records[r].fields.size()));
    }
  }

  std::vector<std::string> classes = schema.classes;
  if (classes.empty()) {
    std::set<std::string> unique;
    for (std::size_t r = 1; r < records.size(); ++r) unique.insert(records[r].fields[label_col]);
    classes.assign(unique.begin(), unique.end());
  }
  std::map<std::string, int> local;
  for (std::size_t i = 0; i < classes.size(); ++i) local[classes[i]] = static_cast<int>(i);

  std::vector<Example> out;
  out.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& f = records[r].fields;
    const auto it = local.find(f[label_col]);
    if (it == local.end()) {
      throw InputError(source + ":" + std::to_string(records[r].line) + ": unknown label '" + f[label_col] + "'");
    }
    std::string text;
    for (std::size_t c : text_cols) {
      if (!text.empty()) text.push_back(' ');
      text += f[c];
    }
    Example ex;
    ex.id = id_prefix + ":" + std::to_string(r);
    ex.tokens = tokenize(text);
    ex.features = hash_features(ex.tokens, schema.hash_dim);
    ex.label = it->second;
    out.push_back(std::move(ex));
  }
  if (class_names != nullptr) *class_names = classes;
  return out;
}

std::vector<int> LabelRegistry::ids_for(const std::string& label_space, std::size_t classes) {
  if (classes == 0) throw ConfigError("label space '" + label_space + "' declares no classes");
  const auto it = spaces_.find(label_space);
  if (it != spaces_.end()) {
    if (it->second.size() != classes) {
      throw ConfigError("label space '" + label_space + "' declared with " + std::to_string(classes) +
                        " classes, previously " + std::to_string(it->second.size()));
    }
    return it->second;
  }
  std::vector<int> ids(classes);
  for (std::size_t i = 0; i < classes; ++i) ids[i] = static_cast<int>(next_id_++);
  spaces_.emplace(label_space, ids);
  return ids;
}

std::vector<int> LabelRegistry::register_task(TaskData& task) {
  if (!task.global_ids.empty()) throw ConfigError("task '" + task.name + "' is already registered");
  const std::string space = task.label_space.empty() ? "task:" + task.name : task.label_space;
  const auto ids = ids_for(space, task.num_classes());
  auto relabel = [&](std::vector<Example>& examples) {
    for (auto& ex : examples) {
      if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= ids.size()) {
        throw InputError("example '" + ex.id + "' has local label " + std::to_string(ex.label) + " outside task '" +
                         task.name + "'");
      }
      ex.label = ids[static_cast<std::size_t>(ex.label)];
    }
  };
  relabel(task.train);
  relabel(task.test);
  task.global_ids = ids;
  return ids;
}

TaskStream::TaskStream(std::vector<TaskData> tasks, std::size_t per_class_batch, std::uint64_t seed)
    : tasks_(std::move(tasks)), per_class_batch_(per_class_batch) {
  if (per_class_batch == 0) throw ConfigError("per-class batch size must be positive");
  state_.resize(tasks_.size());
  for (std::size_t k = 0; k < tasks_.size(); ++k) {
    const auto& task = tasks_[k];
    if (task.global_ids.size() != task.num_classes()) {
      throw ConfigError("task '" + task.name + "' must be registered before streaming");
    }
    auto& st = state_[k];
    st.queues.resize(task.num_classes());
    st.cursor.assign(task.num_classes(), 0);
    std::map<int, std::size_t> local_of;
    for (std::size_t c = 0; c < task.global_ids.size(); ++c) local_of[task.global_ids[c]] = c;
    for (std::size_t i = 0; i < task.train.size(); ++i) {
      const auto it = local_of.find(task.train[i].label);
      if (it == local_of.end()) throw ConfigError("task '" + task.name + "' has an example outside its classes");
      st.queues[it->second].push_back(i);
    }
    Rng rng(derive_seed(seed, "stream", k));
    for (auto& q : st.queues) shuffle(q, rng);
  }
}

std::size_t TaskStream::remaining(std::size_t k) const {
  const auto& st = state_.at(k);
  if (st.exhausted) return 0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < st.queues.size(); ++c) n += st.queues[c].size() - st.cursor[c];
  return n;
}

std::optional<std::vector<Example>> TaskStream::next_batch(std::size_t k) {
  auto& st = state_.at(k);
  if (st.exhausted) return std::nullopt;
  bool short_class = false;
  for (std::size_t c = 0; c < st.queues.size(); ++c) {
    if (st.queues[c].size() - st.cursor[c] < per_class_batch_) short_class = true;
  }
  std::vector<Example> batch;
  for (std::size_t c = 0; c < st.queues.size(); ++c) {
    const std::size_t take = std::min(per_class_batch_, st.queues[c].size() - st.cursor[c]);
    for (std::size_t j = 0; j < take; ++j) {
      const Example& ex = tasks_[k].train[st.queues[c][st.cursor[c]++]];
      ledger_.push_back(ex.id);
      batch.push_back(ex);
    }
  }
  st.consumed += batch.size();
  if (short_class) st.exhausted = true;
  if (remaining(k) == 0) st.exhausted = true;
  if (batch.empty()) return std::nullopt;
  return batch;
}

nlohmann::json TaskStream::manifest() const {
  nlohmann::json tasks = nlohmann::json::array();
  for (std::size_t k = 0; k < tasks_.size(); ++k) {
    const auto& t = tasks_[k];
    nlohmann::json classes = nlohmann::json::object();
    for (std::size_t c = 0; c < t.class_names.size(); ++c) classes[t.class_names[c]] = t.global_ids[c];
    tasks.push_back({{"index", k},
                     {"name", t.name},
                     {"label_space", t.label_space},
                     {"train_size", t.train.size()},
                     {"test_size", t.test.size()},
                     {"batch_size", batch_size(k)},
                     {"consumed", state_[k].consumed},
                     {"classes", classes}});
  }
  return {{"tasks", tasks}, {"per_class_batch", per_class_batch_}};
}

std::vector<std::vector<std::size_t>> order_permutations(std::size_t num_tasks) {
  if (num_tasks == 3) return {{0, 1, 2}, {0, 2, 1}, {2, 0, 1}, {2, 1, 0}, {1, 0, 2}, {1, 2, 0}};
  log::warn("order numbering is defined for 3 tasks; using lexicographic permutations of " +
            std::to_string(num_tasks) + " tasks");
  std::vector<std::size_t> p(num_tasks);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

SynthSpec SynthSpec::benchmark_like() {
  SynthSpec s;
  s.tasks = {{"yelp", 5, "sentiment"}, {"agnews", 4, "news"}, {"amazon", 5, "sentiment"}};
  return s;
}

namespace {

std::string vocab_token(std::size_t i) {
  std::string s = std::to_string(i);
  return "w" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

}  // namespace

std::vector<TaskData> synth_tasks(const SynthSpec& spec) {
  if (spec.tasks.empty()) throw ConfigError("synthetic spec has no tasks");
  if (!(spec.separation > 0.0)) throw ConfigError("synthetic separation must be positive");
  if (spec.samples_per_class == 0) throw ConfigError("synthetic samples_per_class must be positive");
  if (spec.doc_length == 0 || spec.topic_tokens == 0) throw ConfigError("synthetic doc_length and topic_tokens must be positive");
  if (!(spec.domain_share >= 0.0 && spec.domain_share <= 1.0)) throw ConfigError("domain_share must be in [0, 1]");

  // Vocabulary layout: topic blocks per (label space, class), then domain
  // blocks per task, then background.
  std::map<std::string, std::size_t> space_offset;
  std::size_t next = 0;
  std::vector<std::string> spaces;
  for (const auto& t : spec.tasks) {
    if (t.classes == 0) throw ConfigError("synthetic task '" + t.name + "' has no classes");
    const std::string space = t.label_space.empty() ? "task:" + t.name : t.label_space;
    spaces.push_back(space);
    if (!space_offset.count(space)) {
      space_offset[space] = next;
      next += t.classes * spec.topic_tokens;
    }
  }
  const std::size_t domain_base = next;
  next += spec.tasks.size() * spec.domain_tokens;
  if (next >= spec.vocab_size) {
    throw ConfigError("synthetic vocab_size " + std::to_string(spec.vocab_size) + " too small for " +
                      std::to_string(next) + " topic/domain tokens plus background");
  }
  const std::size_t background_base = next;
  const std::size_t background = spec.vocab_size - next;
  std::vector<double> zipf_cdf(background);
  double acc = 0.0;
  for (std::size_t r = 0; r < background; ++r) zipf_cdf[r] = (acc += 1.0 / static_cast<double>(r + 1));
  for (double& x : zipf_cdf) x /= acc;

  const double p_topic = std::isinf(spec.separation) ? 1.0 : spec.separation / (1.0 + spec.separation);

  std::vector<TaskData> out;
  for (std::size_t k = 0; k < spec.tasks.size(); ++k) {
    const auto& ts = spec.tasks[k];
    TaskData task;
    task.name = ts.name;
    task.label_space = ts.label_space;
    for (std::size_t c = 0; c < ts.classes; ++c) task.class_names.push_back(std::to_string(c));

    Rng rng(derive_seed(spec.seed, "synth:" + ts.name, k));
    const std::size_t topic_base = space_offset[spaces[k]];
    auto draw_doc = [&](std::size_t cls) {
      const std::size_t len = spec.doc_length / 2 + uniform_index(rng, spec.doc_length + 1);
      std::vector<std::string> tokens;
      tokens.reserve(len);
      for (std::size_t j = 0; j < len; ++j) {
        std::size_t idx;
        if (uniform01(rng) < p_topic) {
          idx = topic_base + cls * spec.topic_tokens + uniform_index(rng, spec.topic_tokens);
        } else if (spec.domain_tokens > 0 && uniform01(rng) < spec.domain_share) {
          idx = domain_base + k * spec.domain_tokens + uniform_index(rng, spec.domain_tokens);
        } else {
          const double u = uniform01(rng);
          const auto r = static_cast<std::size_t>(std::lower_bound(zipf_cdf.begin(), zipf_cdf.end(), u) - zipf_cdf.begin());
          idx = background_base + std::min(r, background - 1);
        }
        tokens.push_back(vocab_token(idx));
      }
      return tokens;
    };
    auto make = [&](const std::string& split, std::size_t per_class, std::vector<Example>& dst) {
      std::size_t serial = 0;
      for (std::size_t i = 0; i < per_class; ++i) {
        for (std::size_t c = 0; c < ts.classes; ++c) {
          Example ex;
          ex.id = ts.name + ":" + split + ":" + std::to_string(serial++);
          ex.tokens = draw_doc(c);
          ex.features = hash_features(ex.tokens, spec.hash_dim);
          ex.label = static_cast<int>(c);
          ex.task = static_cast<int>(k);
          dst.push_back(std::move(ex));
        }
      }
    };
    make("train", spec.samples_per_class, task.train);
    make("test", spec.test_per_class, task.test);
    out.push_back(std::move(task));
  }
  return out;
}

}  // namespace pmr
