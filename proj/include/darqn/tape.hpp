#pragma once

#include <cstdint>
#include <vector>

#include "darqn/params.hpp"
#include "darqn/tensor.hpp"

namespace darqn {

// Handle to a tape node.
struct Value {
  int idx = -1;
  bool ok() const { return idx >= 0; }
};

struct LstmParamRefs {
  Value w_x;  // [4H, D]  gate order i, f, g, o
  Value b_x;  // [4H]
  Value w_h;  // [4H, H]
  Value b_h;  // [4H]
};

// Define-by-run reverse-mode tape. Forward values are computed eagerly at
// node creation; backward() walks nodes in exact reverse execution order and
// accumulates parameter gradients into Param::grad. Internal node gradients
// are reset at the start of every backward() call, so running the same tape
// twice from zeroed parameter gradients is bit-reproducible.
//
// Single-threaded by contract.
class Tape {
 public:
  explicit Tape(bool recording = true);
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Value constant(Tensor t);
  Value param(Param& p);  // one leaf per Param per tape; reuse on repeat

  // y = x * W^T (+ b). x is [n] or [L,n]; W is [m,n]; b is [m].
  Value linear(Value x, Value w);
  Value linear(Value x, Value w, Value b);

  // x [C,H,W], k [CO,CI,kh,kw] with kh==kw, b [CO]; valid padding, output
  // side (in - k)/stride + 1 must divide exactly.
  Value conv2d(Value x, Value k, Value b, int stride);

  Value add_row_broadcast(Value rows, Value v);  // rows [L,n] + v [n]
  Value tanh_op(Value x);
  Value relu(Value x);
  Value softmax(Value x);      // flat, max-subtracted
  Value log_softmax(Value x);  // flat, max-subtracted

  // -> [2H] laid out [h'; c']
  Value lstm_step(Value x, Value h, Value c, const LstmParamRefs& p);

  Value slice(Value x, int offset, int len);
  Value reshape(Value x, std::vector<int> shape);
  Value channels_to_rows(Value chw);  // [C,H,W] -> [H*W, C]

  Value weighted_row_sum(Value rows, Value w);  // [L,D],[L] -> [D]
  Value select_row(Value rows, int row);        // [L,D] -> [D]
  Value pick(Value x, int index);               // flat -> scalar

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);  // elementwise
  Value square(Value x);
  Value scale(Value x, double c);
  Value sum_all(Value x);  // -> scalar

  const Tensor& value(Value v) const;
  int node_count() const;

  // Backpropagates from a scalar loss; throws on non-scalar loss, invalid
  // handle, or a non-recording tape.
  void backward(Value loss);

  // Gradient of a node after backward(); null if the node was unreachable.
  const Tensor* grad(Value v) const;

 private:
  struct Node;
  int push(Node n);
  Node& at(Value v);
  const Node& at(Value v) const;
  void check(Value v) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<const Param*, int>> param_leaves_;
  bool recording_;
};

}  // namespace darqn
