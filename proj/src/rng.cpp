#include "phnn/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "phnn/error.hpp"

namespace phnn {

uint64_t Rng::below(uint64_t n) {
  if (n == 0) throw Error("Rng::below: n must be positive");
  const uint64_t bound = UINT64_MAX - UINT64_MAX % n;
  uint64_t x = next_u64();
  while (x >= bound) x = next_u64();
  return x % n;
}

double Rng::normal() {
  // u1 in (0,1] so log never sees zero.
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream is(state);
  is >> gen_;
  if (is.fail()) throw Error("Rng::deserialize: malformed engine state");
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
  // splitmix64 finalizer over the combined words
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace phnn
