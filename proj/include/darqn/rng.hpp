#pragma once

#include <cstdint>
#include <random>

namespace darqn {

// mt19937_64 with hand-rolled value mappings. The engine's bit stream is
// pinned by the standard; std::*_distribution is not, so we avoid it to keep
// sequences identical across compilers and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1), 53 usable bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform over {0, ..., n-1}.
  int uniform_int(int n);
  int64_t uniform_int64(int64_t n);

  bool bernoulli(double p) { return uniform01() < p; }

  // Draws index i with probability probs[i]. Requires probs >= 0 summing to
  // 1 within 1e-6; throws std::invalid_argument otherwise.
  int categorical(const double* probs, int n);

  // Stream derivation so that independent consumers (env, exploration, init,
  // eval) get decorrelated sequences from one user-facing seed.
  static uint64_t derive(uint64_t seed, uint64_t stream);

 private:
  std::mt19937_64 eng_;
};

}  // namespace darqn
