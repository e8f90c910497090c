#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pmr/example.hpp"
#include "pmr/model.hpp"

namespace pmr {

// Small random model and data for gradient checks.
struct GradInstance {
  PmrModel model;
  std::vector<Example> batch;  // labeled, classes [0, N)
  std::vector<Example> episode_items;
  ProtoEpisode episode;  // points into episode_items
  std::uint64_t dropout_seed = 0;
};

// Dims stay at or below 16. The episode has 3 classes with 2 support and 2
// query points each. No ReLU pre-activation lies within 1e-2 of zero.
GradInstance make_grad_instance(std::uint64_t seed);

struct GradSuiteEntry {
  std::string loss;
  std::size_t instances = 0;
  double max_relative_error = 0.0;
  std::string worst_param;
};

// Central-difference checks of task cross-entropy, the prototypical loss,
// the inner loss and the outer objective (at a fixed adapted head).
std::vector<GradSuiteEntry> gradient_suite(std::size_t instances, std::uint64_t seed, double eps = 1e-4);

}  // namespace pmr
