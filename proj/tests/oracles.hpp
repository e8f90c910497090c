#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace oracle {

inline std::vector<double> matvec(const std::vector<double>& W, std::size_t rows, std::size_t cols,
                                  const std::vector<double>& x, const std::vector<double>& b) {
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += W[r * cols + c] * x[c];
    y[r] = s + b[r];
  }
  return y;
}

inline double central_difference(const std::function<double()>& f, double& x, double eps = 1e-5) {
  const double saved = x;
  x = saved + eps;
  const double up = f();
  x = saved - eps;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * eps);
}

inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline std::vector<double> mean_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<double> m(rows.at(0).size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) m[i] += r[i];
  for (double& v : m) v /= static_cast<double>(rows.size());
  return m;
}

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Brute-force KNN: distances for every (key, distance) pair in tie-break
// order, sorted, first k keys returned.
inline std::vector<std::string> knn(const std::vector<std::pair<std::string, double>>& pool, std::size_t k,
                                    bool farthest) {
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Insertion sort keeps equal keys in their original order.
  for (std::size_t i = 1; i < order.size(); ++i) {
    std::size_t j = i;
    while (j > 0) {
      const double a = pool[order[j - 1]].second, b = pool[order[j]].second;
      const bool swap = farthest ? a < b : a > b;
      if (!swap) break;
      std::swap(order[j - 1], order[j]);
      --j;
    }
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(pool[order[i]].first);
  return out;
}

// FNV-1a 64 written from the published constants, byte by byte.
inline std::uint64_t fnv1a(const std::string& s) {
  const std::uint64_t prime = 1099511628211ULL;
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h = h ^ static_cast<std::uint64_t>(c);
    h = h * prime;
  }
  return h;
}

inline double replay_rate(double stored, double b, double m, double R) {
  return 100.0 * stored / (b * (m + 1.0) * R + b * m);
}

// Integer search: the period whose rate is nearest the target.
inline std::size_t nearest_period(double target, double stored, double b, double m) {
  std::size_t best = 1;
  double best_gap = std::abs(replay_rate(stored, b, m, 1) - target);
  for (std::size_t R = 2; R < 100000; ++R) {
    const double gap = std::abs(replay_rate(stored, b, m, static_cast<double>(R)) - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = R;
    }
  }
  return best;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double population_std(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace oracle
