#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phnn/ops.hpp"
#include "phnn/tensor.hpp"

namespace phnn {

// How per-stage activations become probability maps:
//   hnn             - independent side outputs plus a learned fused map
//   phnn_pairwise   - stage m adds the previous stage's raw activation
//   phnn_cumulative - stage m adds the previous stage's fused activation,
//                     i.e. the running sum of all earlier activations
enum class FusionMode { hnn, phnn_pairwise, phnn_cumulative };

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& s);

struct ModelConfig {
  int num_stages = 5;
  std::vector<int> convs_per_stage = {2, 2, 3, 3, 3};
  std::vector<int> base_channels = {64, 128, 256, 512, 512};
  // Rational width multiplier applied to base_channels (default 1/8).
  int width_num = 1;
  int width_den = 8;
  int in_channels = 3;
  FusionMode fusion_mode = FusionMode::phnn_cumulative;
  int kernel_size = 3;
  uint64_t seed = 0;

  // Throws ConfigError naming the violated invariant.
  void validate() const;
  // Scaled channel count for stage index (0-based), floor(base * num / den).
  int stage_channels(int stage_index) const;
  // Inputs must have spatial extents divisible by this.
  int pad_multiple() const { return 1 << (num_stages - 1); }

  bool operator==(const ModelConfig&) const = default;
};

struct SideOutput {
  int stage = 0;       // 1-based
  Tensor activation;   // upsampled 1x1-collapse output, [B,1,H,W]
  Tensor pre_sigmoid;  // mode-fused activation feeding the sigmoid
  Tensor probability;  // sigmoid(pre_sigmoid), values in (0,1)
};

struct ForwardResult {
  std::vector<SideOutput> side_outputs;  // one per stage
  std::optional<SideOutput> fused;       // hnn mode only
  // Designated inference output: fused map in hnn mode, deepest side
  // output otherwise.
  const SideOutput& final() const { return fused ? *fused : side_outputs.back(); }
};

// Staged convolutional backbone with per-stage 1x1 collapse, upsampling
// and the three fusion modes. Parameter names follow the documented
// schema (stage{m}.conv{j}.w, ...) and are stable across versions.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  // Spatial extents must be divisible by 2^(M-1); callers pad first.
  ForwardResult forward(const Tensor& batch, Phase phase);

  // Scalar parameters, excluding batch-norm running statistics.
  long long param_count() const;

  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }
  Parameter& param(const std::string& name);
  bool has_param(const std::string& name) const { return index_.count(name) != 0; }

  BatchNormState& bn_state(int stage_index) { return bn_[static_cast<size_t>(stage_index)]; }
  const BatchNormState& bn_state(int stage_index) const {
    return bn_[static_cast<size_t>(stage_index)];
  }
  bool bn_initialized() const;

  const ModelConfig& config() const { return cfg_; }

  void zero_grad();

 private:
  ModelConfig cfg_;
  std::vector<Parameter> params_;
  std::map<std::string, size_t> index_;
  std::vector<BatchNormState> bn_;

  Parameter& add_param(const std::string& name, Tensor t);
};

}  // namespace phnn
