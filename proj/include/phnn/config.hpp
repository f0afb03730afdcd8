#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "phnn/train.hpp"

namespace phnn {

// Flat key=value config file: one key per line, '#' comments, blank lines
// ignored. Unknown keys are errors.
std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path);

// Parses model + training keys (see README for the key list).
TrainConfig parse_train_config(const std::filesystem::path& path);

}  // namespace phnn
