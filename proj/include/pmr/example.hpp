#pragma once

#include <string>
#include <vector>

#include "pmr/numerics.hpp"

namespace pmr {

// One labeled text example. label is the global class id once the task has
// been registered; task is the index of the task in the run's order.
struct Example {
  std::string id;
  std::vector<std::string> tokens;
  SparseVector features;
  int label = -1;
  int task = -1;
};

}  // namespace pmr
