#include "pmr/proto_memory.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "pmr/error.hpp"

namespace pmr {

void PrototypeRegistry::set(Prototype p) {
  const int id = p.class_id;
  by_class_[id] = std::move(p);
}

const Prototype* PrototypeRegistry::find(int class_id) const {
  const auto it = by_class_.find(class_id);
  return it == by_class_.end() ? nullptr : &it->second;
}

const Prototype& PrototypeRegistry::at(int class_id) const {
  const Prototype* p = find(class_id);
  if (p == nullptr) throw StateError("no prototype registered for class " + std::to_string(class_id));
  return *p;
}

Prototype compute_prototype(int class_id, std::span<const Example* const> support, const PmrModel& model,
                            std::int64_t episode) {
  if (support.empty()) throw InputError("compute_prototype: empty support set for class " + std::to_string(class_id));
  Prototype p;
  p.class_id = class_id;
  p.updated_at = episode;
  p.vector.assign(model.config().proto_dim, 0.0);
  for (const Example* ex : support) {
    const Vector z = model.proto_embed(ex->features);
    for (std::size_t i = 0; i < z.size(); ++i) p.vector[i] += z[i];
  }
  for (double& x : p.vector) x /= static_cast<double>(support.size());
  return p;
}

ReplayMemory::ReplayMemory(std::size_t per_class_cap, std::size_t total_cap, DistanceKind distance)
    : per_class_cap_(per_class_cap), total_cap_(total_cap), distance_(distance) {
  if (per_class_cap == 0 || total_cap == 0) throw ConfigError("memory capacities must be positive");
}

std::size_t ReplayMemory::size() const {
  std::size_t n = 0;
  for (const auto& [_, s] : slots_) n += s.size();
  return n;
}

std::size_t ReplayMemory::outlier_size() const {
  std::size_t n = 0;
  for (const auto& [_, s] : outliers_) n += s.size();
  return n;
}

const std::vector<StoredSample>* ReplayMemory::slot(int class_id) const {
  const auto it = slots_.find(class_id);
  return it == slots_.end() ? nullptr : &it->second;
}

std::size_t ReplayMemory::capacity_for(int class_id, std::size_t n) const {
  const std::vector<StoredSample>* own = slot(class_id);
  const std::size_t others = size() - (own ? own->size() : 0);
  const std::size_t budget = total_cap_ > others ? total_cap_ - others : 0;
  return std::min({n, per_class_cap_, budget});
}

std::vector<StoredSample> ReplayMemory::select(int class_id, const std::vector<StoredSample>& existing,
                                               std::span<const Example> candidates, const Embedder& embed,
                                               std::size_t keep, SelectionOrder order) const {
  const Prototype& proto = prototypes_.at(class_id);

  // Union in tie-break order: stored samples first, then candidates by
  // position. Ids already present are not added twice.
  std::vector<StoredSample> pool;
  std::unordered_set<std::string> seen;
  for (const auto& s : existing) {
    if (seen.insert(s.example.id).second) pool.push_back(s);
  }
  for (const auto& ex : candidates) {
    if (ex.label != class_id) continue;
    if (seen.insert(ex.id).second) pool.push_back(StoredSample{ex, std::nullopt});
  }
  for (auto& s : pool) s.distance = distance(embed(s.example), proto.vector, distance_);

  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (order == SelectionOrder::nearest) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return *pool[a].distance < *pool[b].distance; });
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return *pool[a].distance > *pool[b].distance; });
  }
  if (idx.size() > keep) idx.resize(keep);
  std::vector<StoredSample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(std::move(pool[i]));
  return out;
}

void ReplayMemory::write_samples(int class_id, std::span<const Example> candidates, const Embedder& embed,
                                 std::size_t n) {
  if (prototypes_.find(class_id) == nullptr) {
    throw StateError("write_samples: no prototype for class " + std::to_string(class_id));
  }
  const std::size_t keep = capacity_for(class_id, n);
  const auto* existing = slot(class_id);
  auto selected = select(class_id, existing ? *existing : std::vector<StoredSample>{}, candidates, embed, keep,
                         SelectionOrder::nearest);
  if (selected.empty() && existing == nullptr) return;
  slots_[class_id] = std::move(selected);
}

void ReplayMemory::write_outliers(int class_id, std::span<const Example> candidates, const Embedder& embed,
                                  std::size_t n, bool transient) {
  if (prototypes_.find(class_id) == nullptr) {
    throw StateError("write_outliers: no prototype for class " + std::to_string(class_id));
  }
  auto& target = transient ? outliers_ : slots_;
  const std::size_t keep = transient ? std::min(n, per_class_cap_) : capacity_for(class_id, n);
  const auto it = target.find(class_id);
  const bool had_slot = it != target.end();
  auto selected = select(class_id, had_slot ? it->second : std::vector<StoredSample>{}, candidates, embed, keep,
                         SelectionOrder::farthest);
  if (selected.empty() && !had_slot) return;
  target[class_id] = std::move(selected);
}

void ReplayMemory::assign(int class_id, std::vector<StoredSample> samples) {
  for (const auto& s : samples) {
    if (s.example.label != class_id) {
      throw InputError("assign: sample '" + s.example.id + "' does not belong to class " + std::to_string(class_id));
    }
  }
  const std::size_t keep = capacity_for(class_id, per_class_cap_);
  if (samples.size() > keep) samples.resize(keep);
  if (samples.empty() && slot(class_id) == nullptr) return;
  slots_[class_id] = std::move(samples);
}

std::vector<Example> ReplayMemory::read_all() const {
  std::vector<Example> out;
  out.reserve(size() + outlier_size());
  for (const auto& [_, s] : slots_)
    for (const auto& x : s) out.push_back(x.example);
  for (const auto& [_, s] : outliers_)
    for (const auto& x : s) out.push_back(x.example);
  return out;
}

void ReplayMemory::end_task() { outliers_.clear(); }

nlohmann::json ReplayMemory::snapshot_json() const {
  auto dump_slots = [](const std::map<int, std::vector<StoredSample>>& slots) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [cls, samples] : slots) {
      nlohmann::json js = nlohmann::json::array();
      for (const auto& s : samples) {
        std::string text;
        for (std::size_t i = 0; i < s.example.tokens.size(); ++i) {
          if (i) text += ' ';
          text += s.example.tokens[i];
        }
        nlohmann::json entry = {{"id", s.example.id}, {"text", text}, {"task", s.example.task}};
        entry["distance"] = s.distance ? nlohmann::json(*s.distance) : nlohmann::json(nullptr);
        js.push_back(std::move(entry));
      }
      arr.push_back({{"class_id", cls}, {"samples", std::move(js)}});
    }
    return arr;
  };
  return {{"per_class_cap", per_class_cap_},
          {"total_cap", total_cap_},
          {"size", size()},
          {"classes", dump_slots(slots_)},
          {"outliers", dump_slots(outliers_)}};
}

}  // namespace pmr
