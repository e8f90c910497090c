#pragma once

// Dense double-precision inner loops. Every kernel has a scalar reference
// implementation and, on x86-64, an AVX2 variant chosen at runtime.
//
// Element-wise kernels (axpy, adam_update) are bit-identical across
// variants. Reductions (dot, squared_distance) reassociate the sum in the
// vector variant and agree with the reference to rounding only.

#include <cstddef>
#include <string_view>

namespace pmr::kernels {

enum class Isa { scalar, avx2 };

struct AdamCoefficients {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*adam_update)(double* value, const double* grad, double* m, double* v,
                      std::size_t n, const AdamCoefficients& c);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void adam_update(double* value, const double* grad, double* m, double* v,
                 std::size_t n, const AdamCoefficients& c);
}  // namespace scalar

namespace avx2 {
bool available();
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void adam_update(double* value, const double* grad, double* m, double* v,
                 std::size_t n, const AdamCoefficients& c);
}  // namespace avx2

// Table for a given ISA. Requesting avx2 on a machine without it throws
// ConfigError.
const KernelTable& table_for(Isa isa);

// The active table. Chosen once from CPU features, overridable with the
// PMR_ISA environment variable ("scalar" or "avx2") or set_active_isa().
const KernelTable& active();
Isa active_isa();
void set_active_isa(Isa isa);

Isa best_available_isa();
std::string_view isa_name(Isa isa);
Isa parse_isa(std::string_view name);

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline double squared_distance(const double* a, const double* b, std::size_t n) {
  return active().squared_distance(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void adam_update(double* value, const double* grad, double* m, double* v,
                        std::size_t n, const AdamCoefficients& c) {
  active().adam_update(value, grad, m, v, n, c);
}

}  // namespace pmr::kernels
