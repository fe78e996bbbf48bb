#include "darqn/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace darqn {

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  int i = static_cast<int>(uniform01() * n);
  return i < n ? i : n - 1;
}

int64_t Rng::uniform_int64(int64_t n) {
  if (n <= 0) throw std::invalid_argument("uniform_int64: n must be positive");
  int64_t i = static_cast<int64_t>(uniform01() * static_cast<double>(n));
  return i < n ? i : n - 1;
}

int Rng::categorical(const double* probs, int n) {
  if (n <= 0) throw std::invalid_argument("categorical: empty distribution");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!(probs[i] >= 0.0) || !std::isfinite(probs[i]))
      throw std::invalid_argument("categorical: invalid distribution (negative or non-finite mass)");
    sum += probs[i];
  }
  if (std::fabs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("categorical: probabilities sum to " + std::to_string(sum));
  double u = uniform01() * sum;
  double c = 0.0;
  int last_positive = 0;
  for (int i = 0; i < n; ++i) {
    if (probs[i] > 0.0) last_positive = i;
    c += probs[i];
    if (u < c) return i;
  }
  return last_positive;
}

uint64_t Rng::derive(uint64_t seed, uint64_t stream) {
  // splitmix64 over seed ^ golden-ratio-scaled stream index
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace darqn
