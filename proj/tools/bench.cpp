// Kernel benchmark: serial reference vs OpenMP production path at several
// thread counts. Prints a CSV table to stdout.

#include <omp.h>

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "phnn/kernels.hpp"
#include "phnn/rng.hpp"
#include "phnn/threads.hpp"

using namespace phnn;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const double t0 = omp_get_wtime();
  for (int i = 0; i < reps; ++i) fn();
  return (omp_get_wtime() - t0) / reps;
}

void report(const std::string& name, double serial_s, const std::vector<std::pair<int, double>>& omp_s) {
  std::printf("%s,serial,%.6f,1.00\n", name.c_str(), serial_s * 1e3);
  for (const auto& [threads, t] : omp_s) {
    std::printf("%s,omp%d,%.6f,%.2f\n", name.c_str(), threads, t * 1e3, serial_s / t);
  }
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  if (argc > 1) reps = std::atoi(argv[1]);
  const std::vector<int> thread_counts = {1, 2, 4};

  Rng rng(7);
  std::printf("kernel,path,ms_per_call,speedup_vs_serial\n");

  {
    Conv2dDims d{8, 16, 64, 64, 32, 3, 1, 1, 64, 64};
    auto x = random_vec(static_cast<size_t>(d.batch) * d.cin * d.h * d.w, rng);
    auto w = random_vec(static_cast<size_t>(d.cout) * d.cin * d.k * d.k, rng);
    auto b = random_vec(static_cast<size_t>(d.cout), rng);
    std::vector<double> y(static_cast<size_t>(d.batch) * d.cout * d.oh * d.ow);

    const double serial =
        time_of([&] { ref::conv2d_forward(x.data(), w.data(), b.data(), y.data(), d); }, reps);
    std::vector<std::pair<int, double>> rows;
    for (int n : thread_counts) {
      set_thread_count(n);
      rows.emplace_back(
          n, time_of([&] { kernels::conv2d_forward(x.data(), w.data(), b.data(), y.data(), d); },
                     reps));
    }
    report("conv2d_forward", serial, rows);

    auto gy = random_vec(y.size(), rng);
    std::vector<double> gx(x.size()), gw(w.size()), gb(b.size());
    const double serial_bwd = time_of(
        [&] {
          std::fill(gx.begin(), gx.end(), 0.0);
          std::fill(gw.begin(), gw.end(), 0.0);
          std::fill(gb.begin(), gb.end(), 0.0);
          ref::conv2d_backward(x.data(), w.data(), gy.data(), gx.data(), gw.data(), gb.data(), d);
        },
        reps);
    rows.clear();
    for (int n : thread_counts) {
      set_thread_count(n);
      rows.emplace_back(n, time_of(
                               [&] {
                                 std::fill(gx.begin(), gx.end(), 0.0);
                                 std::fill(gw.begin(), gw.end(), 0.0);
                                 std::fill(gb.begin(), gb.end(), 0.0);
                                 kernels::conv2d_grad_input(w.data(), gy.data(), gx.data(), d);
                                 kernels::conv2d_grad_weight(x.data(), gy.data(), gw.data(), d);
                                 kernels::conv2d_grad_bias(gy.data(), gb.data(), d);
                               },
                               reps));
    }
    report("conv2d_backward", serial_bwd, rows);
  }

  {
    Pool2dDims d{8, 32, 64, 64, 2, 2, 32, 32};
    auto x = random_vec(static_cast<size_t>(d.batch) * d.channels * d.h * d.w, rng);
    std::vector<double> y(static_cast<size_t>(d.batch) * d.channels * d.oh * d.ow);
    std::vector<int> argmax(y.size());
    const double serial =
        time_of([&] { ref::maxpool_forward(x.data(), y.data(), argmax.data(), d); }, reps);
    std::vector<std::pair<int, double>> rows;
    for (int n : thread_counts) {
      set_thread_count(n);
      rows.emplace_back(
          n, time_of([&] { kernels::maxpool_forward(x.data(), y.data(), argmax.data(), d); }, reps));
    }
    report("maxpool_forward", serial, rows);
  }

  {
    UpsampleDims d{8, 1, 16, 16, 64, 64};
    auto x = random_vec(static_cast<size_t>(d.batch) * d.channels * d.h * d.w, rng);
    std::vector<double> y(static_cast<size_t>(d.batch) * d.channels * d.oh * d.ow);
    const double serial =
        time_of([&] { ref::upsample_bilinear_forward(x.data(), y.data(), d); }, reps);
    std::vector<std::pair<int, double>> rows;
    for (int n : thread_counts) {
      set_thread_count(n);
      rows.emplace_back(
          n, time_of([&] { kernels::upsample_bilinear_forward(x.data(), y.data(), d); }, reps));
    }
    report("upsample_forward", serial, rows);
  }

  set_thread_count(1);
  return 0;
}
