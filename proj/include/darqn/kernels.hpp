#pragma once

#include <cstddef>
#include <string>

namespace darqn::kernels {

// Hot inner loops of the numerics core, dispatched at runtime. The scalar
// table is the reference: plain sequential IEEE double arithmetic, compiled
// with FP contraction off. The AVX2 table vectorizes the reductions (dot)
// and accumulations (axpy) with FMA; its results can differ from the
// reference in the last ulps, so deterministic mode pins the scalar table.
// The rmsprop kernel is purely elementwise and is bit-identical across
// tables by construction.
enum class Backend { Scalar, Avx2 };

struct Table {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // ms    = decay*ms + (1-decay)*g*g
  // mom   = momentum*mom + alpha*g/sqrt(ms + eps)
  // param = param - mom
  void (*rmsprop)(double* param, const double* grad, double* ms, double* mom,
                  std::size_t n, double alpha, double decay, double momentum,
                  double eps);
};

bool avx2_supported();

// Selects the active table. Requesting Avx2 on a CPU without it throws.
void set_backend(Backend b);
Backend backend();
Backend best_available();
Backend backend_from_string(const std::string& s);  // "scalar" | "avx2" | "auto"

const Table& table();
const Table& table_for(Backend b);

}  // namespace darqn::kernels
