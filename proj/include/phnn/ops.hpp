#pragma once

#include "phnn/tensor.hpp"

namespace phnn {

enum class Phase { train, eval };

// Running statistics owned by the model, updated as a side effect of
// train-mode forward passes. Not differentiated through.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  long long batches_seen = 0;
};

// y[b,oc] = bias[oc] + sum_{ic,kh,kw} x[b,ic,oh*s+kh-p,ow*s+kw-p] * w[oc,ic,kh,kw]
// Output extent: (H + 2*pad - k) / stride + 1 (floor). Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int pad = 0);

Tensor maxpool2d(const Tensor& input, int k, int stride);

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, Phase phase, double eps = 1e-5, double momentum = 0.1);

// Align-corners bilinear upsampling; identity when the target equals the
// source extent.
Tensor upsample_bilinear(const Tensor& input, int target_h, int target_w);

Tensor sigmoid(const Tensor& input);
Tensor relu(const Tensor& input);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor sum_all(const Tensor& a);   // -> [1]
Tensor mean_all(const Tensor& a);  // -> [1]

// Elementwise sigmoid clamped into the open interval (0, 1); stable for
// |x| up to at least 1e3.
double sigmoid_scalar(double x);

}  // namespace phnn
