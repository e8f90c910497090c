#pragma once

#include <filesystem>

#include "pmr/model.hpp"

namespace pmr {

// JSON checkpoint holding every parameter group, the class count and the
// model config with its hash. Doubles are written with round-trip precision.
void save_checkpoint(const std::filesystem::path& path, const PmrModel& model);

// Loads a checkpoint and rejects it when its feature or embedding dims (or
// config hash) differ from the expected config.
PmrModel load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace pmr
