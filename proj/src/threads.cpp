#include "phnn/threads.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace phnn {

namespace {

int read_env() {
  const char* v = std::getenv("PHNN_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  int n = 0;
  try {
    n = std::stoi(v);
  } catch (...) {
    return 1;
  }
  return n <= 0 ? 1 : n;
}

std::atomic<int>& slot() {
  static std::atomic<int> n{read_env()};
  return n;
}

}  // namespace

int thread_count() { return slot().load(std::memory_order_relaxed); }

void set_thread_count(int n) { slot().store(n <= 0 ? 1 : n, std::memory_order_relaxed); }

}  // namespace phnn
