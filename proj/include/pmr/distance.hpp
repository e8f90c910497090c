#pragma once

#include <cmath>
#include <span>
#include <string_view>

#include "pmr/kernels.hpp"
#include "pmr/numerics.hpp"

namespace pmr {

enum class DistanceKind { squared_euclidean, euclidean };

std::string_view distance_name(DistanceKind kind);
DistanceKind parse_distance(std::string_view name);

inline double distance(std::span<const double> a, std::span<const double> b, DistanceKind kind) {
  const double sq = kernels::squared_distance(a.data(), b.data(), a.size());
  return kind == DistanceKind::squared_euclidean ? sq : std::sqrt(sq);
}

// d/da of distance(a, b); the gradient w.r.t. b is its negation. The plain
// Euclidean distance has no gradient at a == b and reports zero there.
inline Vector distance_grad(std::span<const double> a, std::span<const double> b, DistanceKind kind) {
  Vector g(a.size());
  if (kind == DistanceKind::squared_euclidean) {
    for (std::size_t i = 0; i < a.size(); ++i) g[i] = 2.0 * (a[i] - b[i]);
    return g;
  }
  const double norm = std::sqrt(kernels::squared_distance(a.data(), b.data(), a.size()));
  if (norm == 0.0) return Vector(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) g[i] = (a[i] - b[i]) / norm;
  return g;
}

}  // namespace pmr
