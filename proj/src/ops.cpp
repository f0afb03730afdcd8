#include "phnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "phnn/error.hpp"
#include "phnn/kernels.hpp"

namespace phnn {

namespace {

void require_4d(const Tensor& t, const char* op, const char* what) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(op) + ": " + what + " must be 4-D [B,C,H,W], got " +
                     shape_str(t.shape()));
  }
}

std::shared_ptr<Node> make_node(const char* op, std::initializer_list<Tensor> inputs,
                                std::function<void(TensorImpl&)> backward) {
  auto node = std::make_shared<Node>();
  node->op = op;
  for (const Tensor& t : inputs) node->inputs.push_back(t.impl());
  node->backward = std::move(backward);
  return node;
}

bool any_requires_grad(std::initializer_list<Tensor> ts) {
  for (const Tensor& t : ts) {
    if (t.requires_grad()) return true;
  }
  return false;
}

}  // namespace

double sigmoid_scalar(double x) {
  double p;
  if (x >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    p = e / (1.0 + e);
  }
  // Pin strictly inside (0,1): saturated exponents would otherwise round
  // to exactly 0.0 or 1.0 in f64.
  p = std::min(p, 1.0 - std::numeric_limits<double>::epsilon() / 2);
  p = std::max(p, std::numeric_limits<double>::min());
  return p;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int pad) {
  require_4d(input, "conv2d", "input");
  require_4d(weight, "conv2d", "weight");
  if (bias.rank() != 1) {
    throw ShapeError("conv2d: bias must be 1-D [Cout], got " + shape_str(bias.shape()));
  }
  if (stride < 1 || pad < 0 || weight.dim(2) < 1 || weight.dim(2) != weight.dim(3)) {
    throw ShapeError("conv2d: need stride >= 1, pad >= 0, square kernel k >= 1");
  }
  if (input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv2d: input channel axis (" + std::to_string(input.dim(1)) +
                     ") does not match weight Cin axis (" + std::to_string(weight.dim(1)) + ")");
  }
  if (bias.dim(0) != weight.dim(0)) {
    throw ShapeError("conv2d: bias axis (" + std::to_string(bias.dim(0)) +
                     ") does not match weight Cout axis (" + std::to_string(weight.dim(0)) + ")");
  }

  Conv2dDims d;
  d.batch = input.dim(0);
  d.cin = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.cout = weight.dim(0);
  d.k = weight.dim(2);
  d.stride = stride;
  d.pad = pad;
  d.oh = (d.h + 2 * pad - d.k) / stride + 1;
  d.ow = (d.w + 2 * pad - d.k) / stride + 1;
  if (d.h + 2 * pad < d.k || d.w + 2 * pad < d.k) {
    throw ShapeError("conv2d: kernel k=" + std::to_string(d.k) +
                     " larger than padded input on spatial axes " + shape_str(input.shape()));
  }

  const bool rg = any_requires_grad({input, weight, bias});
  auto node = make_node(
      "conv2d", {input, weight, bias},
      [d](TensorImpl& out) {
        auto& in = *out.producer->inputs[0];
        auto& w = *out.producer->inputs[1];
        auto& b = *out.producer->inputs[2];
        if (in.requires_grad) {
          in.ensure_grad();
          kernels::conv2d_grad_input(w.data.data(), out.grad.data(), in.grad.data(), d);
        }
        if (w.requires_grad) {
          w.ensure_grad();
          kernels::conv2d_grad_weight(in.data.data(), out.grad.data(), w.grad.data(), d);
        }
        if (b.requires_grad) {
          b.ensure_grad();
          kernels::conv2d_grad_bias(out.grad.data(), b.grad.data(), d);
        }
      });
  Tensor out = Tensor::op_output({d.batch, d.cout, d.oh, d.ow}, node, rg);
  kernels::conv2d_forward(input.data().data(), weight.data().data(), bias.data().data(),
                          out.data_mut().data(), d);
  return out;
}

Tensor maxpool2d(const Tensor& input, int k, int stride) {
  require_4d(input, "maxpool2d", "input");
  if (k < 1 || stride < 1) throw ShapeError("maxpool2d: need k >= 1 and stride >= 1");
  if (k > input.dim(2) || k > input.dim(3)) {
    throw ShapeError("maxpool2d: window k=" + std::to_string(k) + " larger than input " +
                     shape_str(input.shape()));
  }

  Pool2dDims d;
  d.batch = input.dim(0);
  d.channels = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.k = k;
  d.stride = stride;
  d.oh = (d.h - k) / stride + 1;
  d.ow = (d.w - k) / stride + 1;

  auto argmax = std::make_shared<std::vector<int>>(
      static_cast<size_t>(d.batch) * d.channels * d.oh * d.ow);
  auto node = make_node("maxpool2d", {input}, [d, argmax](TensorImpl& out) {
    auto& in = *out.producer->inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    kernels::maxpool_backward(out.grad.data(), argmax->data(), in.grad.data(), d);
  });
  Tensor out = Tensor::op_output({d.batch, d.channels, d.oh, d.ow}, node, input.requires_grad());
  kernels::maxpool_forward(input.data().data(), out.data_mut().data(), argmax->data(), d);
  return out;
}

Tensor upsample_bilinear(const Tensor& input, int target_h, int target_w) {
  require_4d(input, "upsample_bilinear", "input");
  const int h = input.dim(2), w = input.dim(3);
  if (target_h < h || target_w < w) {
    throw ShapeError("upsample_bilinear: target " + std::to_string(target_h) + "x" +
                     std::to_string(target_w) + " smaller than source " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  if (target_h == h && target_w == w) return input;

  UpsampleDims d;
  d.batch = input.dim(0);
  d.channels = input.dim(1);
  d.h = h;
  d.w = w;
  d.oh = target_h;
  d.ow = target_w;

  auto node = make_node("upsample_bilinear", {input}, [d](TensorImpl& out) {
    auto& in = *out.producer->inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    kernels::upsample_bilinear_backward(out.grad.data(), in.grad.data(), d);
  });
  Tensor out = Tensor::op_output({d.batch, d.channels, d.oh, d.ow}, node, input.requires_grad());
  kernels::upsample_bilinear_forward(input.data().data(), out.data_mut().data(), d);
  return out;
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, Phase phase, double eps, double momentum) {
  require_4d(input, "batchnorm2d", "input");
  const int b = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c) {
    throw ShapeError("batchnorm2d: gamma/beta must be [C] with C=" + std::to_string(c));
  }
  const long long per_channel = static_cast<long long>(b) * h * w;

  std::vector<double> mean(c), var(c);
  if (phase == Phase::train) {
    if (per_channel < 2) {
      throw ShapeError("batchnorm2d: train mode needs B*H*W >= 2 per channel, got " +
                       std::to_string(per_channel));
    }
    const double* x = input.data().data();
    for (int ci = 0; ci < c; ++ci) {
      double s = 0.0;
      for (int bi = 0; bi < b; ++bi) {
        const double* p = x + ((static_cast<long long>(bi) * c + ci) * h) * w;
        for (long long i = 0; i < static_cast<long long>(h) * w; ++i) s += p[i];
      }
      mean[ci] = s / static_cast<double>(per_channel);
      double ss = 0.0;
      for (int bi = 0; bi < b; ++bi) {
        const double* p = x + ((static_cast<long long>(bi) * c + ci) * h) * w;
        for (long long i = 0; i < static_cast<long long>(h) * w; ++i) {
          const double dv = p[i] - mean[ci];
          ss += dv * dv;
        }
      }
      var[ci] = ss / static_cast<double>(per_channel);
    }
    if (state.running_mean.empty()) {
      state.running_mean.assign(c, 0.0);
      state.running_var.assign(c, 0.0);
    }
    for (int ci = 0; ci < c; ++ci) {
      state.running_mean[ci] = (1.0 - momentum) * state.running_mean[ci] + momentum * mean[ci];
      state.running_var[ci] = (1.0 - momentum) * state.running_var[ci] + momentum * var[ci];
    }
    state.batches_seen += 1;
  } else {
    if (state.batches_seen == 0) {
      throw StateError("batchnorm2d: eval mode before any running statistics exist");
    }
    mean = state.running_mean;
    var = state.running_var;
  }

  const bool train = phase == Phase::train;
  const bool rg = any_requires_grad({input, gamma, beta});
  // Backward needs the batch statistics and the normalised values.
  auto saved_mean = std::make_shared<std::vector<double>>(mean);
  auto saved_var = std::make_shared<std::vector<double>>(var);
  auto node = make_node(
      "batchnorm2d", {input, gamma, beta},
      [=](TensorImpl& out) {
        auto& in = *out.producer->inputs[0];
        auto& ga = *out.producer->inputs[1];
        auto& be = *out.producer->inputs[2];
        const double* x = in.data.data();
        const double* gy = out.grad.data();
        const long long hw = static_cast<long long>(h) * w;
        const double n = static_cast<double>(per_channel);
        for (int ci = 0; ci < c; ++ci) {
          const double inv_std = 1.0 / std::sqrt((*saved_var)[ci] + eps);
          const double mu = (*saved_mean)[ci];
          const double g = ga.data[static_cast<size_t>(ci)];
          // Channel reductions shared by all three gradients.
          double sum_gy = 0.0, sum_gy_xhat = 0.0;
          for (int bi = 0; bi < b; ++bi) {
            const long long base = (static_cast<long long>(bi) * c + ci) * hw;
            for (long long i = 0; i < hw; ++i) {
              const double xhat = (x[base + i] - mu) * inv_std;
              sum_gy += gy[base + i];
              sum_gy_xhat += gy[base + i] * xhat;
            }
          }
          if (ga.requires_grad) {
            ga.ensure_grad();
            ga.grad[static_cast<size_t>(ci)] += sum_gy_xhat;
          }
          if (be.requires_grad) {
            be.ensure_grad();
            be.grad[static_cast<size_t>(ci)] += sum_gy;
          }
          if (in.requires_grad) {
            in.ensure_grad();
            for (int bi = 0; bi < b; ++bi) {
              const long long base = (static_cast<long long>(bi) * c + ci) * hw;
              for (long long i = 0; i < hw; ++i) {
                const double xhat = (x[base + i] - mu) * inv_std;
                double gx;
                if (train) {
                  // d/dx of batch normalisation: statistics depend on x.
                  gx = g * inv_std * (gy[base + i] - sum_gy / n - xhat * sum_gy_xhat / n);
                } else {
                  gx = g * inv_std * gy[base + i];
                }
                in.grad[base + i] += gx;
              }
            }
          }
        }
      });
  Tensor out = Tensor::op_output({b, c, h, w}, node, rg);
  {
    double* y = out.data_mut().data();
    const double* x = input.data().data();
    const double* g = gamma.data().data();
    const double* bt = beta.data().data();
    const long long hw = static_cast<long long>(h) * w;
    for (int bi = 0; bi < b; ++bi) {
      for (int ci = 0; ci < c; ++ci) {
        const double inv_std = 1.0 / std::sqrt(var[ci] + eps);
        const long long base = (static_cast<long long>(bi) * c + ci) * hw;
        for (long long i = 0; i < hw; ++i) {
          y[base + i] = g[ci] * ((x[base + i] - mean[ci]) * inv_std) + bt[ci];
        }
      }
    }
  }
  return out;
}

Tensor sigmoid(const Tensor& input) {
  auto node = make_node("sigmoid", {input}, [](TensorImpl& out) {
    auto& in = *out.producer->inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (size_t i = 0; i < out.data.size(); ++i) {
      const double p = out.data[i];
      in.grad[i] += out.grad[i] * p * (1.0 - p);
    }
  });
  Tensor out = Tensor::op_output(input.shape(), node, input.requires_grad());
  const double* x = input.data().data();
  double* y = out.data_mut().data();
  for (long long i = 0; i < input.numel(); ++i) y[i] = sigmoid_scalar(x[i]);
  return out;
}

Tensor relu(const Tensor& input) {
  auto node = make_node("relu", {input}, [](TensorImpl& out) {
    auto& in = *out.producer->inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (size_t i = 0; i < out.data.size(); ++i) {
      if (in.data[i] > 0.0) in.grad[i] += out.grad[i];  // subgradient 0 at x == 0
    }
  });
  Tensor out = Tensor::op_output(input.shape(), node, input.requires_grad());
  const double* x = input.data().data();
  double* y = out.data_mut().data();
  for (long long i = 0; i < input.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  auto node = make_node("add", {a, b}, [](TensorImpl& out) {
    for (int k = 0; k < 2; ++k) {
      auto& in = *out.producer->inputs[static_cast<size_t>(k)];
      if (!in.requires_grad) continue;
      in.ensure_grad();
      for (size_t i = 0; i < out.data.size(); ++i) in.grad[i] += out.grad[i];
    }
  });
  Tensor out = Tensor::op_output(a.shape(), node, any_requires_grad({a, b}));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* y = out.data_mut().data();
  for (long long i = 0; i < a.numel(); ++i) y[i] = pa[i] + pb[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  auto node = make_node("scale", {a}, [c](TensorImpl& out) {
    auto& in = *out.producer->inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (size_t i = 0; i < out.data.size(); ++i) in.grad[i] += c * out.grad[i];
  });
  Tensor out = Tensor::op_output(a.shape(), node, a.requires_grad());
  const double* pa = a.data().data();
  double* y = out.data_mut().data();
  for (long long i = 0; i < a.numel(); ++i) y[i] = c * pa[i];
  return out;
}

Tensor sum_all(const Tensor& a) {
  auto node = make_node("sum_all", {a}, [](TensorImpl& out) {
    auto& in = *out.producer->inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (size_t i = 0; i < in.data.size(); ++i) in.grad[i] += out.grad[0];
  });
  Tensor out = Tensor::op_output({1}, node, a.requires_grad());
  double s = 0.0;
  for (double v : a.data()) s += v;
  out.data_mut()[0] = s;
  return out;
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

}  // namespace phnn
