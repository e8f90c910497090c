#include "pmr/log.hpp"

#include <iostream>
#include <mutex>

namespace pmr::log {

namespace {

std::mutex& mutex() {
  static std::mutex m;
  return m;
}

bool g_quiet = false;
std::vector<std::string> g_warnings;

}  // namespace

void warn(const std::string& message) {
  std::lock_guard lock(mutex());
  g_warnings.push_back(message);
  if (!g_quiet) std::cerr << "warning: " << message << '\n';
}

void info(const std::string& message) {
  std::lock_guard lock(mutex());
  if (!g_quiet) std::cerr << message << '\n';
}

void set_quiet(bool quiet) {
  std::lock_guard lock(mutex());
  g_quiet = quiet;
}

bool quiet() {
  std::lock_guard lock(mutex());
  return g_quiet;
}

std::vector<std::string> take_warnings() {
  std::lock_guard lock(mutex());
  return std::exchange(g_warnings, {});
}

}  // namespace pmr::log
