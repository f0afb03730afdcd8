#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "phnn/error.hpp"
#include "phnn/gradcheck.hpp"
#include "phnn/ops.hpp"
#include "phnn/rng.hpp"
#include "phnn/tensor.hpp"

using namespace phnn;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t{std::move(shape)};
  for (double& v : t.data_mut()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("backward: root = sum(2p) gives grad 2 everywhere") {
  Tensor p({2, 3}, 1.5);
  p.set_requires_grad(true);
  sum_all(scale(p, 2.0)).backward();
  REQUIRE(p.has_grad());
  for (double g : p.grad()) CHECK(g == 2.0);
}

TEST_CASE("backward: sigmoid'(0) = 0.25") {
  Tensor p({1}, 0.0);
  p.set_requires_grad(true);
  sigmoid(p).backward();
  CHECK(p.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("backward on non-scalar root is a contract error") {
  Tensor p({2, 2}, 1.0);
  p.set_requires_grad(true);
  Tensor y = scale(p, 3.0);
  CHECK_THROWS_AS(y.backward(), ShapeError);
}

TEST_CASE("multi-path accumulation sums both contributions") {
  Rng rng(11);
  Tensor p = rand_tensor({2, 1, 4, 4}, rng);
  p.set_requires_grad(true);

  // Two losses sharing p.
  Tensor l1 = sum_all(sigmoid(p));
  Tensor l2 = mean_all(scale(p, 3.0));
  add(l1, l2).backward();
  std::vector<double> both(p.grad().begin(), p.grad().end());

  p.zero_grad();
  l1 = sum_all(sigmoid(p));
  l1.backward();
  std::vector<double> only1(p.grad().begin(), p.grad().end());

  p.zero_grad();
  l2 = mean_all(scale(p, 3.0));
  l2.backward();
  std::vector<double> only2(p.grad().begin(), p.grad().end());

  for (size_t i = 0; i < both.size(); ++i) {
    CHECK(both[i] == doctest::Approx(only1[i] + only2[i]).epsilon(1e-12));
  }
}

TEST_CASE("a tensor feeding the same op twice accumulates") {
  Tensor p({3}, 2.0);
  p.set_requires_grad(true);
  sum_all(add(p, p)).backward();
  for (double g : p.grad()) CHECK(g == 2.0);
}

TEST_CASE("gradcheck: linear function is exact") {
  Tensor p({4}, 0.7);
  p.set_requires_grad(true);
  auto f = [&] { return sum_all(scale(p, 3.25)); };
  auto report = gradcheck(f, {{"p", p}}, 1e-5);
  CHECK(report.worst() < 1e-10);
}

TEST_CASE("gradcheck: conv+sigmoid+mean on 4x4") {
  Rng rng(12);
  Tensor x = rand_tensor({1, 1, 4, 4}, rng);
  x.set_requires_grad(true);
  Tensor w = rand_tensor({1, 1, 3, 3}, rng);
  w.set_requires_grad(true);
  Tensor b = rand_tensor({1}, rng);
  b.set_requires_grad(true);
  auto f = [&] { return mean_all(sigmoid(conv2d(x, w, b, 1, 1))); };
  auto report = gradcheck(f, {{"x", x}, {"w", w}, {"b", b}}, 1e-5);
  CHECK(report.worst() < 1e-6);
}

TEST_CASE("gradcheck rejects eps outside [1e-6, 1e-4]") {
  Tensor p({1}, 0.0);
  p.set_requires_grad(true);
  auto f = [&] { return sum_all(p); };
  CHECK_THROWS_AS(gradcheck(f, {{"p", p}}, 1e-2), ConfigError);
}

TEST_CASE("gradcheck detects a non-deterministic function") {
  Tensor p({1}, 0.0);
  p.set_requires_grad(true);
  int calls = 0;
  auto f = [&] {
    ++calls;
    return Tensor::scalar(static_cast<double>(calls));
  };
  CHECK_THROWS_WITH_AS(gradcheck(f, {{"p", p}}, 1e-5), doctest::Contains("deterministic"), Error);
}

TEST_CASE("gradcheck flags a deliberately broken gradient") {
  // relu with a wrong backward (factor 2), built locally.
  auto broken_relu = [](const Tensor& input) {
    auto node = std::make_shared<Node>();
    node->op = "broken_relu";
    node->inputs.push_back(input.impl());
    node->backward = [](TensorImpl& out) {
      auto& in = *out.producer->inputs[0];
      in.ensure_grad();
      for (size_t i = 0; i < out.data.size(); ++i) {
        if (in.data[i] > 0.0) in.grad[i] += 2.0 * out.grad[i];
      }
    };
    Tensor out = Tensor::op_output(input.shape(), node, input.requires_grad());
    for (long long i = 0; i < input.numel(); ++i) {
      out.data_mut()[static_cast<size_t>(i)] = std::max(input.data()[static_cast<size_t>(i)], 0.0);
    }
    return out;
  };

  Tensor p = Tensor::from_data({3}, {0.5, 1.5, 2.5});
  p.set_requires_grad(true);
  auto f = [&] { return sum_all(broken_relu(p)); };
  auto report = gradcheck(f, {{"p", p}}, 1e-5);
  CHECK(report.worst() > 0.1);
}

TEST_CASE("full battery passes its tolerances") {
  auto battery = run_gradcheck_battery(0);
  for (const auto& line : battery.lines) {
    INFO(line.op, " max_rel_err=", line.max_rel_err, " tol=", line.tol);
    CHECK(line.pass());
  }
  CHECK(battery.all_pass());
}
