#include "phnn/loss.hpp"

#include <cmath>
#include <memory>

#include "phnn/error.hpp"

namespace phnn {

void BetaAccumulator::add_slice(long long negatives, long long total) {
  if (total <= 0) throw DataError("estimate_beta: slice with no pixels");
  if (negatives < 0 || negatives > total) {
    throw DataError("estimate_beta: negative count out of range");
  }
  sum_ratio_ += static_cast<double>(negatives) / static_cast<double>(total);
  slices_ += 1;
}

double BetaAccumulator::value() const {
  if (slices_ == 0) throw DataError("estimate_beta: empty label stream");
  return sum_ratio_ / static_cast<double>(slices_);
}

double estimate_beta(const std::vector<SliceSample>& samples) {
  BetaAccumulator acc;
  for (const auto& s : samples) {
    long long neg = 0;
    for (uint8_t v : s.label) neg += v == 0 ? 1 : 0;
    acc.add_slice(neg, static_cast<long long>(s.label.size()));
  }
  return acc.value();
}

double estimate_beta(const std::vector<MaskVolume>& labels) {
  BetaAccumulator acc;
  for (const auto& m : labels) {
    const long long per_slice = static_cast<long long>(m.nx) * m.ny;
    for (int z = 0; z < m.nz; ++z) {
      long long neg = 0;
      for (int y = 0; y < m.ny; ++y) {
        for (int x = 0; x < m.nx; ++x) neg += m.at(x, y, z) == 0 ? 1 : 0;
      }
      acc.add_slice(neg, per_slice);
    }
  }
  return acc.value();
}

namespace {
constexpr double kLogClamp = 1e-12;
}

Tensor balanced_bce(const Tensor& prob, const Tensor& label, double beta) {
  if (prob.shape() != label.shape()) {
    throw ShapeError("balanced_bce: prob shape " + shape_str(prob.shape()) +
                     " does not match label shape " + shape_str(label.shape()));
  }
  if (beta < 0.0 || beta > 1.0) throw ConfigError("balanced_bce: beta must lie in [0, 1]");
  const double* y = label.data().data();
  for (long long i = 0; i < label.numel(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw DataError("balanced_bce: label contains value " + std::to_string(y[i]) +
                      " (labels must be exactly 0 or 1)");
    }
  }

  const long long batch = prob.rank() >= 1 ? prob.dim(0) : 1;
  const double inv_b = 1.0 / static_cast<double>(batch);
  const double* p = prob.data().data();

  double loss = 0.0;
  for (long long i = 0; i < prob.numel(); ++i) {
    if (y[i] == 1.0) {
      loss -= beta * std::log(std::max(p[i], kLogClamp));
    } else {
      loss -= (1.0 - beta) * std::log(std::max(1.0 - p[i], kLogClamp));
    }
  }
  loss *= inv_b;

  auto node = std::make_shared<Node>();
  node->op = "balanced_bce";
  node->inputs.push_back(prob.impl());
  auto label_impl = label.impl();
  node->backward = [beta, inv_b, label_impl](TensorImpl& out) {
    auto& in = *out.producer->inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    const double g = out.grad[0] * inv_b;
    const double* lp = label_impl->data.data();
    for (size_t i = 0; i < in.data.size(); ++i) {
      const double pi = in.data[i];
      if (lp[i] == 1.0) {
        if (pi > kLogClamp) in.grad[i] -= g * beta / pi;
      } else {
        if (1.0 - pi > kLogClamp) in.grad[i] += g * (1.0 - beta) / (1.0 - pi);
      }
    }
  };
  Tensor out = Tensor::op_output({1}, node, prob.requires_grad());
  out.data_mut()[0] = loss;
  return out;
}

TotalLoss total_loss(const ForwardResult& result, const Tensor& label, const LossSpec& spec) {
  if (result.side_outputs.empty()) throw ShapeError("total_loss: no side outputs");
  if (spec.include_fused && !result.fused) {
    throw ConfigError("total_loss: include_fused requested but the forward result has no fused "
                      "output (not an hnn-mode model)");
  }

  TotalLoss out;
  Tensor sum;
  for (const auto& side : result.side_outputs) {
    Tensor term = balanced_bce(side.probability, label, spec.beta);
    out.per_side.push_back(term.item());
    sum = sum.defined() ? add(sum, term) : term;
  }
  if (spec.include_fused) {
    Tensor term = balanced_bce(result.fused->probability, label, spec.beta);
    out.fused = term.item();
    sum = add(sum, term);
  }
  out.value = sum;
  return out;
}

}  // namespace phnn
