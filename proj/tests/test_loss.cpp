#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "phnn/error.hpp"
#include "phnn/gradcheck.hpp"
#include "phnn/loss.hpp"
#include "phnn/model.hpp"
#include "phnn/ops.hpp"
#include "phnn/rng.hpp"

using namespace phnn;

namespace {

// Direct scalar evaluation of the balanced cross entropy.
double bce_oracle(const std::vector<double>& p, const std::vector<double>& y, double beta,
                  long long batch) {
  double loss = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (y[i] == 1.0) {
      loss -= beta * std::log(p[i]);
    } else {
      loss -= (1.0 - beta) * std::log(1.0 - p[i]);
    }
  }
  return loss / static_cast<double>(batch);
}

}  // namespace

TEST_CASE("estimate_beta counting oracle") {
  // One slice, 100 pixels, 20 positive -> 0.8.
  BetaAccumulator acc;
  acc.add_slice(80, 100);
  CHECK(acc.value() == doctest::Approx(0.8).epsilon(1e-15));

  // All-negative labels -> 1.0.
  BetaAccumulator neg;
  neg.add_slice(50, 50);
  neg.add_slice(10, 10);
  CHECK(neg.value() == 1.0);

  // Mean of per-slice ratios, not the pooled pixel ratio: slices with
  // negative fractions 0.6 (of 10 px) and 1.0 (of 1000 px) -> 0.8.
  BetaAccumulator mean_of_ratios;
  mean_of_ratios.add_slice(6, 10);
  mean_of_ratios.add_slice(1000, 1000);
  CHECK(mean_of_ratios.value() == doctest::Approx(0.8).epsilon(1e-15));
  // The pooled ratio would have been (6+1000)/1010 != 0.8.
  CHECK(std::abs((6.0 + 1000.0) / 1010.0 - 0.8) > 0.1);

  BetaAccumulator empty;
  CHECK_THROWS_AS(empty.value(), DataError);
}

TEST_CASE("estimate_beta is permutation-invariant") {
  Rng rng(51);
  std::vector<std::pair<long long, long long>> slices;
  for (int i = 0; i < 20; ++i) {
    const long long total = 10 + static_cast<long long>(rng.below(100));
    slices.emplace_back(static_cast<long long>(rng.below(static_cast<uint64_t>(total + 1))), total);
  }
  BetaAccumulator fwd;
  for (const auto& [neg, total] : slices) fwd.add_slice(neg, total);
  BetaAccumulator rev;
  for (auto it = slices.rbegin(); it != slices.rend(); ++it) rev.add_slice(it->first, it->second);
  CHECK(fwd.value() == doctest::Approx(rev.value()).epsilon(1e-15));
}

TEST_CASE("balanced_bce single-pixel example") {
  // y=1, p=0.5, beta=0.8 -> 0.8 * ln 2.
  Tensor p = Tensor::from_data({1, 1, 1, 1}, {0.5});
  Tensor y = Tensor::from_data({1, 1, 1, 1}, {1.0});
  Tensor loss = balanced_bce(p, y, 0.8);
  CHECK(loss.item() == doctest::Approx(0.8 * std::log(2.0)).epsilon(1e-12));
  CHECK(loss.item() == doctest::Approx(0.554518).epsilon(1e-6));
}

TEST_CASE("balanced_bce random single-pixel cases match the direct formula") {
  Rng rng(52);
  for (int i = 0; i < 100; ++i) {
    const double p = rng.uniform(0.01, 0.99);
    const double y = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const double beta = rng.uniform();
    Tensor pt = Tensor::from_data({1, 1, 1, 1}, {p});
    Tensor yt = Tensor::from_data({1, 1, 1, 1}, {y});
    const double expected = bce_oracle({p}, {y}, beta, 1);
    CHECK(std::abs(balanced_bce(pt, yt, beta).item() - expected) < 1e-12);
  }
}

TEST_CASE("balanced_bce edge behaviour") {
  // Saturated correct prediction -> loss ~ 0.
  Tensor p = Tensor::from_data({1, 1, 1, 2}, {1.0 - 1e-15, 1e-15});
  Tensor y = Tensor::from_data({1, 1, 1, 2}, {1.0, 0.0});
  CHECK(balanced_bce(p, y, 0.5).item() < 1e-12);

  // beta = 1 with all-negative labels -> exactly 0.
  Tensor p2 = Tensor::from_data({1, 1, 1, 3}, {0.3, 0.6, 0.9});
  Tensor y2({1, 1, 1, 3}, 0.0);
  CHECK(balanced_bce(p2, y2, 1.0).item() == 0.0);

  // Labels outside {0, 1} are an input error.
  Tensor ybad = Tensor::from_data({1, 1, 1, 3}, {0.0, 0.5, 1.0});
  CHECK_THROWS_AS(balanced_bce(p2, ybad, 0.5), DataError);
}

TEST_CASE("balanced_bce reduction: sum over pixels, mean over batch") {
  Rng rng(53);
  std::vector<double> probs(2 * 6), labels(2 * 6);
  for (auto& v : probs) v = rng.uniform(0.05, 0.95);
  for (auto& v : labels) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  Tensor p = Tensor::from_data({2, 1, 2, 3}, probs);
  Tensor y = Tensor::from_data({2, 1, 2, 3}, labels);
  CHECK(balanced_bce(p, y, 0.7).item() ==
        doctest::Approx(bce_oracle(probs, labels, 0.7, 2)).epsilon(1e-13));
}

TEST_CASE("loss is non-negative, beta=0.5 halves the unweighted bce") {
  Rng rng(54);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> probs(9), labels(9);
    for (auto& v : probs) v = rng.uniform(0.01, 0.99);
    for (auto& v : labels) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    Tensor p = Tensor::from_data({1, 1, 3, 3}, probs);
    Tensor y = Tensor::from_data({1, 1, 3, 3}, labels);
    const double half = balanced_bce(p, y, 0.5).item();
    CHECK(half >= 0.0);
    // Unweighted bce with both weights 1 equals beta=0.5 scaled by 2.
    double unweighted = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
      unweighted -= labels[i] == 1.0 ? std::log(probs[i]) : std::log(1.0 - probs[i]);
    }
    CHECK(half == doctest::Approx(0.5 * unweighted).epsilon(1e-13));
  }
}

TEST_CASE("moving a pixel toward its label never increases the loss") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> probs(4), labels(4);
    for (auto& v : probs) v = rng.uniform(0.1, 0.9);
    for (auto& v : labels) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const double beta = rng.uniform(0.05, 0.95);
    Tensor p = Tensor::from_data({1, 1, 2, 2}, probs);
    Tensor y = Tensor::from_data({1, 1, 2, 2}, labels);
    const double before = balanced_bce(p, y, beta).item();

    const size_t j = rng.below(4);
    probs[j] = labels[j] == 1.0 ? std::min(probs[j] + 0.05, 0.999) : std::max(probs[j] - 0.05, 0.001);
    Tensor p2 = Tensor::from_data({1, 1, 2, 2}, probs);
    CHECK(balanced_bce(p2, y, beta).item() <= before + 1e-12);
  }
}

TEST_CASE("total_loss adds one term per side output") {
  ModelConfig cfg;
  cfg.num_stages = 3;
  cfg.convs_per_stage = {2, 2, 3};
  cfg.base_channels = {64, 128, 256};
  cfg.fusion_mode = FusionMode::phnn_cumulative;
  cfg.seed = 3;
  Model model(cfg);
  Rng rng(56);
  Tensor batch({1, 3, 16, 16});
  for (double& v : batch.data_mut()) v = rng.uniform(0.0, 1.0);
  Tensor label({1, 1, 16, 16});
  for (double& v : label.data_mut()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;

  ForwardResult r = model.forward(batch, Phase::train);
  LossSpec spec;
  spec.beta = 0.7;
  TotalLoss loss = total_loss(r, label, spec);
  CHECK(loss.per_side.size() == 3);
  CHECK_FALSE(loss.fused.has_value());
  double sum = 0.0;
  for (double v : loss.per_side) sum += v;
  CHECK(loss.value.item() == doctest::Approx(sum).epsilon(1e-13));

  // M identical side outputs -> M times the single loss.
  ForwardResult fake;
  fake.side_outputs = {r.side_outputs[0], r.side_outputs[0], r.side_outputs[0]};
  TotalLoss triple = total_loss(fake, label, spec);
  CHECK(triple.value.item() ==
        doctest::Approx(3.0 * loss.per_side[0]).epsilon(1e-13));

  // include_fused without a fused output is a mode error.
  spec.include_fused = true;
  CHECK_THROWS_AS(total_loss(r, label, spec), ConfigError);
}

TEST_CASE("total_loss gradient passes gradcheck at 1e-4") {
  ModelConfig cfg;
  cfg.num_stages = 3;
  cfg.convs_per_stage = {1, 1, 1};
  cfg.base_channels = {32, 32, 32};
  cfg.width_num = 1;
  cfg.width_den = 8;
  cfg.fusion_mode = FusionMode::phnn_cumulative;
  cfg.seed = 9;
  Model model(cfg);
  Rng rng(57);
  Tensor batch({1, 3, 8, 8});
  for (double& v : batch.data_mut()) v = rng.uniform(0.0, 1.0);
  Tensor label({1, 1, 8, 8});
  for (double& v : label.data_mut()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  LossSpec spec;
  spec.beta = 0.6;
  auto f = [&] { return total_loss(model.forward(batch, Phase::train), label, spec).value; };
  std::vector<Parameter> params(model.parameters().begin(), model.parameters().end());
  auto report = gradcheck(f, params, 1e-5, 16, 1234, 1e-4);
  CHECK(report.worst() < 1e-4);
  CHECK(report.worst_subfloor() < 1e-6);
}
