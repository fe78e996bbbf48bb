#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "darqn/tensor.hpp"

namespace darqn {

// One trainable array plus its gradient buffer. Gradients accumulate across
// backward passes; the trainer zeroes them explicitly, never the tape.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Named, ordered collection of trainable arrays. Insertion order is stable
// and is the serialization order. Storage is a deque so references handed
// out stay valid as arrays are added.
class ParameterSet {
 public:
  Param& add(const std::string& name, std::vector<int> shape);

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  size_t count() const { return params_.size(); }
  Param& nth(size_t i) { return params_[i]; }
  const Param& nth(size_t i) const { return params_[i]; }

  int64_t total_size() const;
  void zero_grads();

  // Bit-exact copy of values from a structurally identical set.
  void copy_values_from(const ParameterSet& o);

  ParameterSet clone() const;

 private:
  std::deque<Param> params_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace darqn
