#include "darqn/optim.hpp"

#include <stdexcept>

#include "darqn/kernels.hpp"

namespace darqn {

Rmsprop::Rmsprop(RmspropOptions opt) : opt_(opt) {
  if (!(opt_.decay >= 0.0 && opt_.decay < 1.0)) throw std::invalid_argument("rmsprop decay must be in [0,1)");
  if (!(opt_.momentum >= 0.0 && opt_.momentum < 1.0))
    throw std::invalid_argument("rmsprop momentum must be in [0,1)");
  if (!(opt_.epsilon > 0.0)) throw std::invalid_argument("rmsprop epsilon must be positive");
}

void Rmsprop::step(ParameterSet& params, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (ms_.empty()) {
    for (size_t i = 0; i < params.count(); ++i) {
      ms_.emplace_back(params.nth(i).value.shape());
      mom_.emplace_back(params.nth(i).value.shape());
    }
  }
  if (ms_.size() != params.count()) throw std::invalid_argument("optimizer state does not match parameter set");
  const auto& K = kernels::table();
  for (size_t i = 0; i < params.count(); ++i) {
    Param& p = params.nth(i);
    if (!p.value.same_shape(ms_[i])) throw std::invalid_argument("optimizer state shape mismatch at '" + p.name + "'");
    K.rmsprop(p.value.data(), p.grad.data(), ms_[i].data(), mom_[i].data(),
              static_cast<size_t>(p.value.size()), alpha, opt_.decay, opt_.momentum, opt_.epsilon);
  }
}

void Sgd::step(ParameterSet& params, double alpha) {
  const auto& K = kernels::table();
  for (size_t i = 0; i < params.count(); ++i) {
    Param& p = params.nth(i);
    K.axpy(-alpha, p.grad.data(), p.value.data(), static_cast<size_t>(p.value.size()));
  }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, const RmspropOptions& opt) {
  if (kind == "rmsprop") return std::make_unique<Rmsprop>(opt);
  if (kind == "sgd") return std::make_unique<Sgd>();
  throw std::invalid_argument("unknown optimizer '" + kind + "' (expected rmsprop|sgd)");
}

}  // namespace darqn
