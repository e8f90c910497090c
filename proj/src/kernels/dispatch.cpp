#include <atomic>
#include <cstdlib>
#include <string>

#include "pmr/error.hpp"
#include "pmr/kernels.hpp"

namespace pmr::kernels {

namespace {

constexpr KernelTable kScalarTable{&scalar::dot, &scalar::squared_distance, &scalar::axpy,
                                   &scalar::adam_update};
constexpr KernelTable kAvx2Table{&avx2::dot, &avx2::squared_distance, &avx2::axpy,
                                 &avx2::adam_update};

Isa initial_isa() {
  if (const char* env = std::getenv("PMR_ISA"); env != nullptr && *env != '\0') {
    const Isa requested = parse_isa(env);
    if (requested == Isa::avx2 && !avx2::available()) return Isa::scalar;
    return requested;
  }
  return best_available_isa();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table_for(initial_isa())};
  return slot;
}

}  // namespace

Isa best_available_isa() { return avx2::available() ? Isa::avx2 : Isa::scalar; }

const KernelTable& table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return kScalarTable;
    case Isa::avx2:
      if (!avx2::available()) throw ConfigError("avx2 kernels requested but the CPU lacks AVX2");
      return kAvx2Table;
  }
  return kScalarTable;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

Isa active_isa() { return active_slot().load() == &kAvx2Table ? Isa::avx2 : Isa::scalar; }

void set_active_isa(Isa isa) { active_slot().store(&table_for(isa)); }

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  throw ConfigError("unknown kernel ISA '" + std::string(name) + "' (expected scalar or avx2)");
}

}  // namespace pmr::kernels
