#pragma once

#include <cstdint>

namespace darqn {

// Linear interpolation from start to end over decay_steps, clamped at end
// afterward. decay_steps must be positive.
inline double linear_schedule(int64_t step, double start, double end, int64_t decay_steps) {
  if (step <= 0) return start;
  if (step >= decay_steps) return end;
  const double t = static_cast<double>(step) / static_cast<double>(decay_steps);
  return start + (end - start) * t;
}

}  // namespace darqn
