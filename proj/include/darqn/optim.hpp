#pragma once

#include <memory>
#include <string>
#include <vector>

#include "darqn/params.hpp"

namespace darqn {

// Consumes Param::grad buffers; zeroing them between updates is the caller's
// job, so summed multi-pass gradients remain observable.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParameterSet& params, double alpha) = 0;
};

struct RmspropOptions {
  double decay = 0.95;
  double momentum = 0.95;
  double epsilon = 1e-6;
};

// ms    = decay*ms + (1-decay)*g^2
// mom   = momentum*mom + alpha*g/sqrt(ms + eps)
// param = param - mom
class Rmsprop : public Optimizer {
 public:
  explicit Rmsprop(RmspropOptions opt = {});
  void step(ParameterSet& params, double alpha) override;

 private:
  RmspropOptions opt_;
  std::vector<Tensor> ms_, mom_;
};

class Sgd : public Optimizer {
 public:
  void step(ParameterSet& params, double alpha) override;
};

std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, const RmspropOptions& opt);

}  // namespace darqn
