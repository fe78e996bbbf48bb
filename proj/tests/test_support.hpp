#pragma once

// Shared helpers for the unit and acceptance suites.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "darqn/params.hpp"
#include "darqn/rng.hpp"
#include "darqn/tape.hpp"
#include "darqn/tensor.hpp"

namespace darqn::testsupport {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline void randomize(ParameterSet& ps, Rng& rng, double lo = -0.5, double hi = 0.5) {
  for (size_t i = 0; i < ps.count(); ++i) {
    Param& p = ps.nth(i);
    for (int64_t j = 0; j < p.value.size(); ++j) p.value[j] = rng.uniform(lo, hi);
  }
}

struct FdFailure {
  std::string param;
  int64_t index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel = 0.0;
};

// Central finite differences against tape gradients over every scalar of
// every parameter in `ps`. The loss builder must be a pure function of the
// parameter values. Relative error is |analytic - numeric| / max(1, |numeric|).
inline bool check_gradients_fd(ParameterSet& ps,
                               const std::function<Value(Tape&, ParameterSet&)>& loss_fn,
                               double tol = 1e-4, double h = 1e-5,
                               FdFailure* failure = nullptr) {
  std::vector<Tensor> analytic;
  {
    Tape t(true);
    Value loss = loss_fn(t, ps);
    ps.zero_grads();
    t.backward(loss);
    for (size_t i = 0; i < ps.count(); ++i) analytic.push_back(ps.nth(i).grad);
  }
  auto eval = [&]() {
    Tape t(false);
    return t.value(loss_fn(t, ps))[0];
  };
  for (size_t i = 0; i < ps.count(); ++i) {
    Param& p = ps.nth(i);
    for (int64_t j = 0; j < p.value.size(); ++j) {
      const double orig = p.value[j];
      p.value[j] = orig + h;
      const double fp = eval();
      p.value[j] = orig - h;
      const double fm = eval();
      p.value[j] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double rel = std::fabs(analytic[i][j] - numeric) / std::max(1.0, std::fabs(numeric));
      if (rel > tol) {
        if (failure) *failure = FdFailure{p.name, j, analytic[i][j], numeric, rel};
        return false;
      }
    }
  }
  return true;
}

}  // namespace darqn::testsupport
