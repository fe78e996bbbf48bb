// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma and must only be entered after a runtime cpuid check.

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "darqn/kernels.hpp"

namespace darqn::kernels {

namespace {

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  acc0 = _mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3));
  double lanes[4];
  _mm256_storeu_pd(lanes, acc0);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Elementwise; keeps the exact mul/add sequence of the scalar reference so
// both tables produce identical bits.
void rmsprop_avx2(double* param, const double* grad, double* ms, double* mom,
                  std::size_t n, double alpha, double decay, double momentum,
                  double eps) {
  const __m256d vdecay = _mm256_set1_pd(decay);
  const __m256d vone_minus = _mm256_set1_pd(1.0 - decay);
  const __m256d vmomentum = _mm256_set1_pd(momentum);
  const __m256d valpha = _mm256_set1_pd(alpha);
  const __m256d veps = _mm256_set1_pd(eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    __m256d m = _mm256_loadu_pd(ms + i);
    m = _mm256_add_pd(_mm256_mul_pd(vdecay, m),
                      _mm256_mul_pd(vone_minus, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(ms + i, m);
    __m256d v = _mm256_loadu_pd(mom + i);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(valpha, g),
                                       _mm256_sqrt_pd(_mm256_add_pd(m, veps)));
    v = _mm256_add_pd(_mm256_mul_pd(vmomentum, v), step);
    _mm256_storeu_pd(mom + i, v);
    __m256d p = _mm256_loadu_pd(param + i);
    p = _mm256_sub_pd(p, v);
    _mm256_storeu_pd(param + i, p);
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    ms[i] = decay * ms[i] + (1.0 - decay) * (g * g);
    mom[i] = momentum * mom[i] + alpha * g / std::sqrt(ms[i] + eps);
    param[i] -= mom[i];
  }
}

const Table kAvx2Table{"avx2", dot_avx2, axpy_avx2, rmsprop_avx2};

}  // namespace

const Table& avx2_table() { return kAvx2Table; }

}  // namespace darqn::kernels
