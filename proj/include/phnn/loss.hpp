#pragma once

#include <optional>
#include <vector>

#include "phnn/ctdata.hpp"
#include "phnn/model.hpp"
#include "phnn/tensor.hpp"

namespace phnn {

struct LossSpec {
  double beta = 0.5;          // fixed for a whole training run
  bool include_fused = false; // hnn mode only
};

// Mean over slices of (negative-pixel count / total pixels) — the mean of
// per-slice ratios, not the pooled pixel ratio.
class BetaAccumulator {
 public:
  void add_slice(long long negatives, long long total);
  double value() const;  // in [0, 1]
  long long slices() const { return slices_; }

 private:
  double sum_ratio_ = 0.0;
  long long slices_ = 0;
};

double estimate_beta(const std::vector<SliceSample>& samples);
double estimate_beta(const std::vector<MaskVolume>& labels);

// Class-balanced cross entropy: positive pixels weighted beta, negative
// pixels (1 - beta); summed over pixels, averaged over the batch.
// prob must be strictly inside (0, 1); label must be exactly 0/1.
Tensor balanced_bce(const Tensor& prob, const Tensor& label, double beta);

struct TotalLoss {
  Tensor value;                  // differentiable scalar
  std::vector<double> per_side;  // loss of each side output, shallow to deep
  std::optional<double> fused;
};

// Sum of the per-side-output losses, equally weighted, plus the fused
// term when requested.
TotalLoss total_loss(const ForwardResult& result, const Tensor& label, const LossSpec& spec);

}  // namespace phnn
