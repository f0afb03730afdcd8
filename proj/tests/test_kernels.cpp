// Parity between the OpenMP production kernels and the serial reference,
// and thread-count invariance of the production path.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "phnn/kernels.hpp"
#include "phnn/rng.hpp"
#include "phnn/threads.hpp"

using namespace phnn;

namespace {

std::vector<double> rand_vec(size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <= tol);
  }
}

}  // namespace

TEST_CASE("conv2d: production matches serial reference within 1e-12") {
  Rng rng(21);
  for (auto [batch, cin, h, w, cout, k, stride, pad] :
       {std::tuple{2, 3, 9, 11, 4, 3, 1, 1}, {1, 1, 5, 5, 1, 3, 2, 0}, {3, 2, 8, 8, 5, 3, 1, 0},
        {2, 4, 12, 7, 3, 1, 1, 0}, {1, 2, 10, 10, 2, 3, 3, 1}}) {
    Conv2dDims d{batch, cin, h, w, cout, k, stride, pad,
                 (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1};
    auto x = rand_vec(static_cast<size_t>(batch) * cin * h * w, rng);
    auto wt = rand_vec(static_cast<size_t>(cout) * cin * k * k, rng);
    auto b = rand_vec(static_cast<size_t>(cout), rng);
    const size_t yn = static_cast<size_t>(batch) * cout * d.oh * d.ow;

    set_thread_count(2);
    std::vector<double> y_omp(yn);
    kernels::conv2d_forward(x.data(), wt.data(), b.data(), y_omp.data(), d);
    std::vector<double> y_ref(yn);
    ref::conv2d_forward(x.data(), wt.data(), b.data(), y_ref.data(), d);
    check_close(y_omp, y_ref, 1e-12);

    auto gy = rand_vec(yn, rng);
    std::vector<double> gx_omp(x.size(), 0.0), gw_omp(wt.size(), 0.0), gb_omp(b.size(), 0.0);
    kernels::conv2d_grad_input(wt.data(), gy.data(), gx_omp.data(), d);
    kernels::conv2d_grad_weight(x.data(), gy.data(), gw_omp.data(), d);
    kernels::conv2d_grad_bias(gy.data(), gb_omp.data(), d);

    std::vector<double> gx_ref(x.size(), 0.0), gw_ref(wt.size(), 0.0), gb_ref(b.size(), 0.0);
    ref::conv2d_backward(x.data(), wt.data(), gy.data(), gx_ref.data(), gw_ref.data(),
                         gb_ref.data(), d);
    check_close(gx_omp, gx_ref, 1e-12);
    check_close(gw_omp, gw_ref, 1e-12);
    check_close(gb_omp, gb_ref, 1e-12);
  }
  set_thread_count(1);
}

TEST_CASE("conv2d: bit-identical across thread counts") {
  Rng rng(22);
  Conv2dDims d{3, 4, 16, 16, 6, 3, 1, 1, 16, 16};
  auto x = rand_vec(static_cast<size_t>(d.batch) * d.cin * d.h * d.w, rng);
  auto wt = rand_vec(static_cast<size_t>(d.cout) * d.cin * d.k * d.k, rng);
  auto b = rand_vec(static_cast<size_t>(d.cout), rng);
  const size_t yn = static_cast<size_t>(d.batch) * d.cout * d.oh * d.ow;
  auto gy = rand_vec(yn, rng);

  std::vector<std::vector<double>> forward_runs, gx_runs, gw_runs;
  for (int n : {1, 2, 3, 8}) {
    set_thread_count(n);
    std::vector<double> y(yn);
    kernels::conv2d_forward(x.data(), wt.data(), b.data(), y.data(), d);
    forward_runs.push_back(std::move(y));
    std::vector<double> gx(x.size(), 0.0), gw(wt.size(), 0.0);
    kernels::conv2d_grad_input(wt.data(), gy.data(), gx.data(), d);
    kernels::conv2d_grad_weight(x.data(), gy.data(), gw.data(), d);
    gx_runs.push_back(std::move(gx));
    gw_runs.push_back(std::move(gw));
  }
  set_thread_count(1);
  for (size_t r = 1; r < forward_runs.size(); ++r) {
    CHECK(forward_runs[r] == forward_runs[0]);  // bitwise
    CHECK(gx_runs[r] == gx_runs[0]);
    CHECK(gw_runs[r] == gw_runs[0]);
  }
}

TEST_CASE("maxpool: parity and thread invariance") {
  Rng rng(23);
  Pool2dDims d{2, 3, 10, 8, 2, 2, 5, 4};
  auto x = rand_vec(static_cast<size_t>(d.batch) * d.channels * d.h * d.w, rng);
  const size_t yn = static_cast<size_t>(d.batch) * d.channels * d.oh * d.ow;
  auto gy = rand_vec(yn, rng);

  set_thread_count(3);
  std::vector<double> y_omp(yn);
  std::vector<int> am_omp(yn);
  kernels::maxpool_forward(x.data(), y_omp.data(), am_omp.data(), d);
  std::vector<double> gx_omp(x.size(), 0.0);
  kernels::maxpool_backward(gy.data(), am_omp.data(), gx_omp.data(), d);

  set_thread_count(1);
  std::vector<double> y_ref(yn);
  std::vector<int> am_ref(yn);
  ref::maxpool_forward(x.data(), y_ref.data(), am_ref.data(), d);
  std::vector<double> gx_ref(x.size(), 0.0);
  ref::maxpool_backward(gy.data(), am_ref.data(), gx_ref.data(), d);

  CHECK(y_omp == y_ref);    // max is order-free: bitwise equal
  CHECK(am_omp == am_ref);  // same tie-break rule
  CHECK(gx_omp == gx_ref);
}

TEST_CASE("upsample: parity and thread invariance") {
  Rng rng(24);
  UpsampleDims d{2, 2, 6, 7, 13, 19};
  auto x = rand_vec(static_cast<size_t>(d.batch) * d.channels * d.h * d.w, rng);
  const size_t yn = static_cast<size_t>(d.batch) * d.channels * d.oh * d.ow;
  auto gy = rand_vec(yn, rng);

  set_thread_count(4);
  std::vector<double> y_omp(yn);
  kernels::upsample_bilinear_forward(x.data(), y_omp.data(), d);
  std::vector<double> gx_omp(x.size(), 0.0);
  kernels::upsample_bilinear_backward(gy.data(), gx_omp.data(), d);

  set_thread_count(1);
  std::vector<double> y_one(yn);
  kernels::upsample_bilinear_forward(x.data(), y_one.data(), d);
  CHECK(y_omp == y_one);  // bitwise across thread counts

  std::vector<double> y_ref(yn);
  ref::upsample_bilinear_forward(x.data(), y_ref.data(), d);
  check_close(y_omp, y_ref, 1e-12);

  std::vector<double> gx_ref(x.size(), 0.0);
  ref::upsample_bilinear_backward(gy.data(), gx_ref.data(), d);
  check_close(gx_omp, gx_ref, 1e-12);
}
