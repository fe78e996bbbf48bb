#include "darqn/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace darqn::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void rmsprop_scalar(double* param, const double* grad, double* ms, double* mom,
                    std::size_t n, double alpha, double decay, double momentum,
                    double eps) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    ms[i] = decay * ms[i] + (1.0 - decay) * (g * g);
    mom[i] = momentum * mom[i] + alpha * g / std::sqrt(ms[i] + eps);
    param[i] -= mom[i];
  }
}

const Table kScalarTable{"scalar", dot_scalar, axpy_scalar, rmsprop_scalar};

const Table* g_current = &kScalarTable;
Backend g_backend = Backend::Scalar;

}  // namespace

#if defined(DARQN_HAVE_AVX2_BUILD)
// Defined in kernels_avx2.cpp, compiled with -mavx2 -mfma.
const Table& avx2_table();

bool avx2_supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#else
bool avx2_supported() { return false; }
#endif

void set_backend(Backend b) {
  switch (b) {
    case Backend::Scalar:
      g_current = &kScalarTable;
      g_backend = b;
      return;
    case Backend::Avx2:
#if defined(DARQN_HAVE_AVX2_BUILD)
      if (avx2_supported()) {
        g_current = &avx2_table();
        g_backend = b;
        return;
      }
#endif
      throw std::runtime_error("avx2 backend requested but not supported on this CPU/build");
  }
  throw std::runtime_error("unknown kernel backend");
}

Backend backend() { return g_backend; }

Backend best_available() { return avx2_supported() ? Backend::Avx2 : Backend::Scalar; }

Backend backend_from_string(const std::string& s) {
  if (s == "scalar") return Backend::Scalar;
  if (s == "avx2") return Backend::Avx2;
  if (s == "auto") return best_available();
  throw std::invalid_argument("unknown backend '" + s + "' (expected auto|scalar|avx2)");
}

const Table& table() { return *g_current; }

const Table& table_for(Backend b) {
  if (b == Backend::Scalar) return kScalarTable;
#if defined(DARQN_HAVE_AVX2_BUILD)
  if (b == Backend::Avx2 && avx2_supported()) return avx2_table();
#endif
  throw std::runtime_error("requested kernel table not available");
}

}  // namespace darqn::kernels
