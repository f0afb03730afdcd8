#pragma once

namespace phnn {

// Worker count for the OpenMP kernels. Resolved once from PHNN_THREADS:
// absent or 0 means single-threaded. Results are bit-identical for any
// count because every kernel fixes the reduction order per output element.
int thread_count();

// Overrides the environment-derived value (tests, benchmarks).
void set_thread_count(int n);

}  // namespace phnn
