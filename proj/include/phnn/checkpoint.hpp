#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "phnn/model.hpp"
#include "phnn/tensor.hpp"

namespace phnn {

// PHN1 container: magic "PHN1", u16 version LE, u32 header length LE,
// UTF-8 JSON header (config, tensor names/shapes/offsets, counters, rng
// state), then the raw little-endian f64 payloads in header order.
// save -> load -> save is byte-identical.
struct Checkpoint {
  static constexpr uint16_t kVersion = 1;

  ModelConfig config;
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> values;
  };
  std::vector<Entry> entries;  // parameters, bn buffers, optimizer velocities

  uint64_t iteration = 0;
  uint64_t epoch = 0;
  uint64_t epoch_step = 0;
  uint64_t epoch_seed = 0;  // shuffle seed of the in-flight epoch
  std::string rng_state;
  std::optional<double> beta;
  std::optional<double> calibrated_threshold;

  const Entry* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Model state <-> checkpoint entries. Velocity entries are named
// "velocity." + parameter name; batch-norm buffers
// "stage{m}.bn.running_mean" / ".running_var" / ".count".
void model_to_entries(const Model& model, Checkpoint& ckpt);
void entries_to_model(const Checkpoint& ckpt, Model& model);

}  // namespace phnn
