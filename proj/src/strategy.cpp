#include "pmr/strategy.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "pmr/error.hpp"

namespace pmr {

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::argmin: return "argmin";
    case StrategyKind::augment: return "augment";
    case StrategyKind::argmax: return "argmax";
    case StrategyKind::mix: return "mix";
    case StrategyKind::random: return "random";
  }
  return "argmin";
}

StrategyKind parse_strategy(std::string_view name) {
  if (name == "argmin") return StrategyKind::argmin;
  if (name == "augment") return StrategyKind::augment;
  if (name == "argmax") return StrategyKind::argmax;
  if (name == "mix") return StrategyKind::mix;
  if (name == "random") return StrategyKind::random;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

bool replay_due(std::size_t episode, std::size_t period) {
  if (period == 0) throw ConfigError("replay period must be at least 1");
  return episode > 0 && episode % period == 0;
}

double replay_rate(std::size_t stored, std::size_t batch_size, std::size_t support_batches, std::size_t period) {
  const double denom = static_cast<double>(batch_size) * static_cast<double>(support_batches + 1) *
                           static_cast<double>(period) +
                       static_cast<double>(batch_size) * static_cast<double>(support_batches);
  if (denom <= 0.0) throw ConfigError("replay_rate: zero denominator (batch size or period is zero)");
  return 100.0 * static_cast<double>(stored) / denom;
}

std::size_t rate_matched_period(double target_rate, std::size_t stored, std::size_t batch_size,
                                std::size_t support_batches) {
  if (!(target_rate > 0.0)) throw ConfigError("target replay rate must be positive");
  if (stored == 0 || batch_size == 0) throw ConfigError("rate_matched_period: stored and batch size must be positive");
  const double best = replay_rate(stored, batch_size, support_batches, 1);
  if (best < target_rate) {
    throw ConfigError("target replay rate " + std::to_string(target_rate) + "% unreachable (max " +
                      std::to_string(best) + "% at period 1)");
  }
  // Solve stored*100 / (b(m+1)R + bm) = target for real R, then compare the
  // two neighbouring integers.
  const double b = static_cast<double>(batch_size);
  const double m = static_cast<double>(support_batches);
  const double exact = (100.0 * static_cast<double>(stored) / target_rate - b * m) / (b * (m + 1.0));
  std::size_t lo = static_cast<std::size_t>(std::max(1.0, std::floor(exact)));
  std::size_t hi = lo + 1;
  const double err_lo = std::abs(replay_rate(stored, batch_size, support_batches, lo) - target_rate);
  const double err_hi = std::abs(replay_rate(stored, batch_size, support_batches, hi) - target_rate);
  return err_hi < err_lo ? hi : lo;
}

CandidatePool candidate_pool(StrategyKind kind, std::span<const Example> support, std::span<const Example> query) {
  CandidatePool pool;
  if (kind == StrategyKind::augment) {
    for (const auto& ex : support) pool[ex.label].push_back(ex);
  }
  for (const auto& ex : query) pool[ex.label].push_back(ex);
  return pool;
}

std::vector<WriteRequest> write_requests(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::argmin:
    case StrategyKind::augment:
      return {{SelectionOrder::nearest, false}};
    case StrategyKind::argmax:
      return {{SelectionOrder::farthest, false}};
    case StrategyKind::mix:
      return {{SelectionOrder::nearest, false}, {SelectionOrder::farthest, true}};
    case StrategyKind::random:
      return {};
  }
  return {};
}

namespace {

void random_write(ReplayMemory& memory, int class_id, const std::vector<Example>& candidates, std::size_t n, Rng& rng) {
  std::vector<StoredSample> pool;
  std::unordered_set<std::string> seen;
  if (const auto* existing = memory.slot(class_id)) {
    for (const auto& s : *existing)
      if (seen.insert(s.example.id).second) pool.push_back(s);
  }
  for (const auto& ex : candidates) {
    if (ex.label == class_id && seen.insert(ex.id).second) pool.push_back(StoredSample{ex, std::nullopt});
  }
  const std::size_t keep = memory.capacity_for(class_id, n);
  std::vector<StoredSample> chosen;
  for (std::size_t i : sample_without_replacement(rng, pool.size(), keep)) chosen.push_back(pool[i]);
  memory.assign(class_id, std::move(chosen));
}

}  // namespace

void select_and_write(StrategyKind kind, ReplayMemory& memory, const CandidatePool& pool, const Embedder& embed,
                      std::size_t n, Rng& rng) {
  for (const auto& [class_id, candidates] : pool) {
    if (kind == StrategyKind::random) {
      random_write(memory, class_id, candidates, n, rng);
      continue;
    }
    for (const auto& req : write_requests(kind)) {
      if (req.order == SelectionOrder::nearest) {
        memory.write_samples(class_id, candidates, embed, n);
      } else {
        memory.write_outliers(class_id, candidates, embed, n, req.transient);
      }
    }
  }
}

}  // namespace pmr
