#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "pmr/distance.hpp"
#include "pmr/example.hpp"
#include "pmr/model.hpp"

namespace pmr {

struct Prototype {
  int class_id = -1;
  Vector vector;
  std::int64_t updated_at = -1;  // episode index of the last update
};

// One prototype per class, last write wins.
class PrototypeRegistry {
 public:
  void set(Prototype p);
  const Prototype* find(int class_id) const;
  const Prototype& at(int class_id) const;
  bool contains(int class_id) const { return by_class_.count(class_id) != 0; }
  std::size_t size() const { return by_class_.size(); }
  const std::map<int, Prototype>& all() const { return by_class_; }

 private:
  std::map<int, Prototype> by_class_;
};

// Mean eval-mode prototype-head embedding of the support samples.
Prototype compute_prototype(int class_id, std::span<const Example* const> support, const PmrModel& model,
                            std::int64_t episode);

struct StoredSample {
  Example example;
  // Distance to the class prototype at the last write; empty for samples
  // written without a prototype (random selection).
  std::optional<double> distance;
};

using Embedder = std::function<Vector(const Example&)>;

enum class SelectionOrder { nearest, farthest };

// Per-class replay slots with capacity n per class and a total budget B,
// plus transient outlier slots used by the mix strategy.
class ReplayMemory {
 public:
  ReplayMemory(std::size_t per_class_cap = 5, std::size_t total_cap = 45,
               DistanceKind distance = DistanceKind::squared_euclidean);

  std::size_t per_class_cap() const { return per_class_cap_; }
  std::size_t total_cap() const { return total_cap_; }
  DistanceKind distance_kind() const { return distance_; }

  PrototypeRegistry& prototypes() { return prototypes_; }
  const PrototypeRegistry& prototypes() const { return prototypes_; }

  // KNN write: X_l becomes the n candidates nearest to the class prototype
  // among X_l and the class-l candidates. Candidates of other classes are
  // ignored. Stored distances are recomputed with the current embedder.
  void write_samples(int class_id, std::span<const Example> candidates, const Embedder& embed, std::size_t n);

  // Same selection with farthest-first order. With transient set, the
  // result goes to the outlier slot instead of the main slot.
  void write_outliers(int class_id, std::span<const Example> candidates, const Embedder& embed, std::size_t n,
                      bool transient);

  // Replaces the main slot for a class with the given samples (random
  // selection path). Capacity limits still apply.
  void assign(int class_id, std::vector<StoredSample> samples);

  // Main slots in ascending class id and stored order, then outlier slots in
  // the same order.
  std::vector<Example> read_all() const;

  // Drops the transient outlier slots.
  void end_task();

  std::size_t size() const;
  std::size_t outlier_size() const;
  bool empty() const { return size() == 0 && outlier_size() == 0; }

  const std::map<int, std::vector<StoredSample>>& slots() const { return slots_; }
  const std::map<int, std::vector<StoredSample>>& outlier_slots() const { return outliers_; }
  const std::vector<StoredSample>* slot(int class_id) const;

  // Capacity available to class_id in the main slots: min(n, cap, budget
  // left after every other class).
  std::size_t capacity_for(int class_id, std::size_t n) const;

  // Diagnostics snapshot: class id, sample ids, raw text and distance.
  nlohmann::json snapshot_json() const;

 private:
  std::vector<StoredSample> select(int class_id, const std::vector<StoredSample>& existing,
                                   std::span<const Example> candidates, const Embedder& embed, std::size_t keep,
                                   SelectionOrder order) const;

  std::size_t per_class_cap_;
  std::size_t total_cap_;
  DistanceKind distance_;
  PrototypeRegistry prototypes_;
  std::map<int, std::vector<StoredSample>> slots_;
  std::map<int, std::vector<StoredSample>> outliers_;
};

}  // namespace pmr
