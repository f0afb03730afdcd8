#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace phnn {

// Deterministic random source. All draws are derived from the raw
// mt19937_64 bit stream with explicit arithmetic, so a seed pins the
// exact sequence; the engine state round-trips through its standard
// textual representation for checkpointing.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) via rejection sampling.
  uint64_t below(uint64_t n);

  // Standard normal, Box-Muller with a fresh pair per call (no cached
  // spare, so the state is exactly the engine state).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const;
  void deserialize(const std::string& state);

 private:
  std::mt19937_64 gen_;
};

// Stateless 64-bit mix for deriving stream seeds, e.g. (seed, epoch).
uint64_t mix_seed(uint64_t a, uint64_t b);

}  // namespace phnn
