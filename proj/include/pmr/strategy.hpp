#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "pmr/example.hpp"
#include "pmr/proto_memory.hpp"
#include "pmr/random.hpp"

namespace pmr {

enum class StrategyKind { argmin, augment, argmax, mix, random };

std::string_view strategy_name(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);

struct ReplaySchedule {
  std::size_t period = 50;          // R_F, in episodes
  std::size_t support_batches = 5;  // m
  std::size_t per_class_batch = 5;  // examples per class per batch

  std::size_t batch_size(std::size_t task_classes) const { return per_class_batch * task_classes; }
};

// Periodic replay: true iff episode % period == 0. Episodes count from 1.
bool replay_due(std::size_t episode, std::size_t period);

// Percentage of revisited samples: 100 * stored / (b(m+1)R_F + bm).
double replay_rate(std::size_t stored, std::size_t batch_size, std::size_t support_batches, std::size_t period);

// Replay period whose rate is closest to target_rate (percent). Throws
// ConfigError when even period 1 cannot reach the target.
std::size_t rate_matched_period(double target_rate, std::size_t stored, std::size_t batch_size,
                                std::size_t support_batches);

using CandidatePool = std::map<int, std::vector<Example>>;

// Per-class candidates: the query batch, plus the support batches for augment.
CandidatePool candidate_pool(StrategyKind kind, std::span<const Example> support, std::span<const Example> query);

struct WriteRequest {
  SelectionOrder order;
  bool transient;
};

// The writes a strategy performs per class. Random has none (it does not
// use prototypes).
std::vector<WriteRequest> write_requests(StrategyKind kind);

// Applies the strategy's writes for every class in the pool.
void select_and_write(StrategyKind kind, ReplayMemory& memory, const CandidatePool& pool, const Embedder& embed,
                      std::size_t n, Rng& rng);

}  // namespace pmr
