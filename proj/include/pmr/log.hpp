#pragma once

#include <string>
#include <vector>

namespace pmr::log {

// Warnings go to stderr unless silenced; every warning is also kept so run
// reports can list them.
void warn(const std::string& message);
void info(const std::string& message);
void set_quiet(bool quiet);
bool quiet();
std::vector<std::string> take_warnings();

}  // namespace pmr::log
