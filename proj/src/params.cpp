#include "darqn/params.hpp"

#include <stdexcept>

namespace darqn {

Param& ParameterSet::add(const std::string& name, std::vector<int> shape) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  params_.push_back(Param{name, Tensor(shape), Tensor(shape)});
  index_[name] = params_.size() - 1;
  return params_.back();
}

Param& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return params_[it->second];
}

const Param& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return params_[it->second];
}

int64_t ParameterSet::total_size() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grads() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParameterSet::copy_values_from(const ParameterSet& o) {
  if (o.count() != count()) throw std::invalid_argument("parameter set layout mismatch");
  for (size_t i = 0; i < params_.size(); ++i) {
    const Param& src = o.params_[i];
    Param& dst = params_[i];
    if (dst.name != src.name || !dst.value.same_shape(src.value))
      throw std::invalid_argument("parameter set layout mismatch at '" + dst.name + "'");
    dst.value.vec() = src.value.vec();
  }
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& p : params_) {
    Param& q = out.add(p.name, p.value.shape());
    q.value.vec() = p.value.vec();
    q.grad.vec() = p.grad.vec();
  }
  return out;
}

}  // namespace darqn
