#include "darqn/tape.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "darqn/kernels.hpp"

namespace darqn {

namespace {

enum class Op : uint8_t {
  Const,
  ParamLeaf,
  Linear,
  Conv2d,
  AddRowBroadcast,
  Tanh,
  Relu,
  Softmax,
  LogSoftmax,
  Lstm,
  Slice,
  Reshape,
  ChannelsToRows,
  WeightedRowSum,
  SelectRow,
  Pick,
  Add,
  Sub,
  Mul,
  Square,
  Scale,
  SumAll,
};

void sigmoid_inplace(double* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i) x[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void tanh_inplace(double* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

}  // namespace

struct Tape::Node {
  Op op;
  Tensor value;
  Tensor grad;            // sized lazily during backward
  std::vector<int> in;    // input node indices
  std::vector<int> iarg;  // per-op integers (stride, offsets, picked index...)
  double darg = 0.0;
  Tensor aux;             // cached forward intermediates needed by backward
  Param* bound = nullptr;
};

Tape::Tape(bool recording) : recording_(recording) {}
Tape::~Tape() = default;

int Tape::node_count() const { return static_cast<int>(nodes_.size()); }

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::at(Value v) {
  check(v);
  return nodes_[static_cast<size_t>(v.idx)];
}

const Tape::Node& Tape::at(Value v) const {
  check(v);
  return nodes_[static_cast<size_t>(v.idx)];
}

void Tape::check(Value v) const {
  if (!v.ok() || v.idx >= static_cast<int>(nodes_.size()))
    throw std::logic_error("invalid tape value handle");
}

const Tensor& Tape::value(Value v) const { return at(v).value; }

const Tensor* Tape::grad(Value v) const {
  const Node& n = at(v);
  return n.grad.empty() ? nullptr : &n.grad;
}

Value Tape::constant(Tensor t) {
  Node n;
  n.op = Op::Const;
  n.value = std::move(t);
  return Value{push(std::move(n))};
}

Value Tape::param(Param& p) {
  for (const auto& [bound, idx] : param_leaves_)
    if (bound == &p) return Value{idx};
  Node n;
  n.op = Op::ParamLeaf;
  n.value = p.value;  // snapshot; params are immutable during a pass
  n.bound = &p;
  int idx = push(std::move(n));
  param_leaves_.emplace_back(&p, idx);
  return Value{idx};
}

// ---------------------------------------------------------------------------
// linear

Value Tape::linear(Value x, Value w) { return linear(x, w, Value{}); }

Value Tape::linear(Value x, Value w, Value b) {
  const Tensor& xv = at(x).value;
  const Tensor& wv = at(w).value;
  if (wv.rank() != 2) throw std::invalid_argument("linear: weight must be rank 2, got " + wv.shape_str());
  const int out = wv.dim(0);
  const int in = wv.dim(1);
  const bool rows_input = xv.rank() == 2;
  const int L = rows_input ? xv.dim(0) : 1;
  const int n = rows_input ? xv.dim(1) : static_cast<int>(xv.size());
  if (xv.rank() > 2) throw std::invalid_argument("linear: input rank must be 1 or 2");
  if (n != in)
    throw std::invalid_argument("linear: input width " + std::to_string(n) +
                                " does not match weight " + wv.shape_str());
  const double* bias = nullptr;
  if (b.ok()) {
    const Tensor& bv = at(b).value;
    if (bv.size() != out)
      throw std::invalid_argument("linear: bias size " + std::to_string(bv.size()) +
                                  " does not match output " + std::to_string(out));
    bias = bv.data();
  }

  Node node;
  node.op = Op::Linear;
  node.in = {x.idx, w.idx, b.ok() ? b.idx : -1};
  node.value = rows_input ? Tensor({L, out}) : Tensor({out});
  const auto& K = kernels::table();
  for (int l = 0; l < L; ++l) {
    const double* xr = xv.data() + static_cast<int64_t>(l) * n;
    double* yr = node.value.data() + static_cast<int64_t>(l) * out;
    for (int o = 0; o < out; ++o)
      yr[o] = K.dot(wv.data() + static_cast<int64_t>(o) * in, xr, static_cast<size_t>(in)) +
              (bias ? bias[o] : 0.0);
  }
  return Value{push(std::move(node))};
}

// ---------------------------------------------------------------------------
// conv2d, via im2row patches: P[H'W', CI*k*k], y[co, xy] = dot(K[co], P[xy]) + b[co]

namespace {
struct ConvGeom {
  int ci, h, w, co, k, stride, oh, ow;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& kern, const Tensor& bias, int stride) {
  if (x.rank() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W], got " + x.shape_str());
  if (kern.rank() != 4) throw std::invalid_argument("conv2d: kernels must be [CO,CI,k,k], got " + kern.shape_str());
  if (kern.dim(2) != kern.dim(3)) throw std::invalid_argument("conv2d: kernels must be square");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  ConvGeom g;
  g.ci = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.co = kern.dim(0);
  g.k = kern.dim(2);
  g.stride = stride;
  if (kern.dim(1) != g.ci)
    throw std::invalid_argument("conv2d: kernel input channels " + std::to_string(kern.dim(1)) +
                                " do not match input " + x.shape_str());
  if (bias.size() != g.co) throw std::invalid_argument("conv2d: bias size must equal output channels");
  auto out_side = [](int in, int k, int s, const char* axis) {
    const int span = in - k;
    if (span < 0 || span % s != 0)
      throw std::invalid_argument(std::string("conv2d: non-integral output size along ") + axis +
                                  " (in=" + std::to_string(in) + ", k=" + std::to_string(k) +
                                  ", stride=" + std::to_string(s) + ")");
    return span / s + 1;
  };
  g.oh = out_side(g.h, g.k, g.stride, "height");
  g.ow = out_side(g.w, g.k, g.stride, "width");
  return g;
}

void im2row(const Tensor& x, const ConvGeom& g, double* patches) {
  const int cols = g.ci * g.k * g.k;
  for (int oy = 0; oy < g.oh; ++oy) {
    for (int ox = 0; ox < g.ow; ++ox) {
      double* row = patches + static_cast<int64_t>(oy * g.ow + ox) * cols;
      for (int ci = 0; ci < g.ci; ++ci) {
        const double* plane = x.data() + static_cast<int64_t>(ci) * g.h * g.w;
        for (int ky = 0; ky < g.k; ++ky) {
          const double* src = plane + static_cast<int64_t>(oy * g.stride + ky) * g.w + ox * g.stride;
          std::memcpy(row + (ci * g.k + ky) * g.k, src, sizeof(double) * static_cast<size_t>(g.k));
        }
      }
    }
  }
}
}  // namespace

Value Tape::conv2d(Value x, Value k, Value b, int stride) {
  const Tensor& xv = at(x).value;
  const Tensor& kv = at(k).value;
  const Tensor& bv = at(b).value;
  const ConvGeom g = conv_geometry(xv, kv, bv, stride);
  const int cols = g.ci * g.k * g.k;
  const int cells = g.oh * g.ow;

  Node node;
  node.op = Op::Conv2d;
  node.in = {x.idx, k.idx, b.idx};
  node.iarg = {stride};
  node.aux = Tensor({cells, cols});
  im2row(xv, g, node.aux.data());
  node.value = Tensor({g.co, g.oh, g.ow});
  const auto& K = kernels::table();
  for (int co = 0; co < g.co; ++co) {
    const double* krow = kv.data() + static_cast<int64_t>(co) * cols;
    double* out = node.value.data() + static_cast<int64_t>(co) * cells;
    const double bias = bv[co];
    for (int xy = 0; xy < cells; ++xy)
      out[xy] = K.dot(krow, node.aux.data() + static_cast<int64_t>(xy) * cols,
                      static_cast<size_t>(cols)) +
                bias;
  }
  if (!recording_) node.aux = Tensor();
  return Value{push(std::move(node))};
}

// ---------------------------------------------------------------------------
// elementwise and reductions

Value Tape::add_row_broadcast(Value rows, Value v) {
  const Tensor& rv = at(rows).value;
  const Tensor& vv = at(v).value;
  if (rv.rank() != 2 || vv.size() != rv.dim(1))
    throw std::invalid_argument("add_row_broadcast: shapes " + rv.shape_str() + " and " + vv.shape_str());
  Node node;
  node.op = Op::AddRowBroadcast;
  node.in = {rows.idx, v.idx};
  node.value = rv;
  const int L = rv.dim(0), n = rv.dim(1);
  for (int l = 0; l < L; ++l) {
    double* row = node.value.data() + static_cast<int64_t>(l) * n;
    for (int i = 0; i < n; ++i) row[i] += vv[i];
  }
  return Value{push(std::move(node))};
}

Value Tape::tanh_op(Value x) {
  Node node;
  node.op = Op::Tanh;
  node.in = {x.idx};
  node.value = at(x).value;
  tanh_inplace(node.value.data(), node.value.size());
  return Value{push(std::move(node))};
}

Value Tape::relu(Value x) {
  Node node;
  node.op = Op::Relu;
  node.in = {x.idx};
  node.value = at(x).value;
  for (int64_t i = 0; i < node.value.size(); ++i)
    if (node.value[i] < 0.0) node.value[i] = 0.0;
  return Value{push(std::move(node))};
}

namespace {
double max_subtract_exp(const Tensor& x, Tensor& out) {
  double m = x[0];
  for (int64_t i = 1; i < x.size(); ++i) m = std::max(m, x[i]);
  double z = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    z += out[i];
  }
  return z;
}
}  // namespace

Value Tape::softmax(Value x) {
  const Tensor& xv = at(x).value;
  if (xv.size() == 0) throw std::invalid_argument("softmax: empty input");
  if (!xv.all_finite()) throw std::invalid_argument("softmax: non-finite input");
  Node node;
  node.op = Op::Softmax;
  node.in = {x.idx};
  node.value = Tensor(xv.shape());
  const double z = max_subtract_exp(xv, node.value);
  for (int64_t i = 0; i < node.value.size(); ++i) node.value[i] /= z;
  return Value{push(std::move(node))};
}

Value Tape::log_softmax(Value x) {
  const Tensor& xv = at(x).value;
  if (xv.size() == 0) throw std::invalid_argument("log_softmax: empty input");
  if (!xv.all_finite()) throw std::invalid_argument("log_softmax: non-finite input");
  Node node;
  node.op = Op::LogSoftmax;
  node.in = {x.idx};
  node.value = Tensor(xv.shape());
  double m = xv[0];
  for (int64_t i = 1; i < xv.size(); ++i) m = std::max(m, xv[i]);
  double z = 0.0;
  for (int64_t i = 0; i < xv.size(); ++i) z += std::exp(xv[i] - m);
  const double logz = std::log(z);
  for (int64_t i = 0; i < xv.size(); ++i) node.value[i] = xv[i] - m - logz;
  return Value{push(std::move(node))};
}

// ---------------------------------------------------------------------------
// lstm

Value Tape::lstm_step(Value x, Value h, Value c, const LstmParamRefs& p) {
  const Tensor& xv = at(x).value;
  const Tensor& hv = at(h).value;
  const Tensor& cv = at(c).value;
  const Tensor& wx = at(p.w_x).value;
  const Tensor& bx = at(p.b_x).value;
  const Tensor& wh = at(p.w_h).value;
  const Tensor& bh = at(p.b_h).value;
  if (wx.rank() != 2 || wh.rank() != 2) throw std::invalid_argument("lstm_step: weight rank");
  const int D = static_cast<int>(xv.size());
  const int H = static_cast<int>(hv.size());
  if (cv.size() != H) throw std::invalid_argument("lstm_step: cell size mismatch");
  if (wx.dim(0) != 4 * H || wx.dim(1) != D || wh.dim(0) != 4 * H || wh.dim(1) != H ||
      bx.size() != 4 * H || bh.size() != 4 * H)
    throw std::invalid_argument("lstm_step: parameter shapes do not match D=" + std::to_string(D) +
                                " H=" + std::to_string(H));

  Node node;
  node.op = Op::Lstm;
  node.in = {x.idx, h.idx, c.idx, p.w_x.idx, p.b_x.idx, p.w_h.idx, p.b_h.idx};
  node.value = Tensor({2 * H});

  // preactivations for the four gates, then activations cached for backward
  std::vector<double> a(static_cast<size_t>(4 * H));
  const auto& K = kernels::table();
  for (int r = 0; r < 4 * H; ++r)
    a[static_cast<size_t>(r)] =
        bx[r] + bh[r] + K.dot(wx.data() + static_cast<int64_t>(r) * D, xv.data(), static_cast<size_t>(D)) +
        K.dot(wh.data() + static_cast<int64_t>(r) * H, hv.data(), static_cast<size_t>(H));

  double* gi = a.data();
  double* gf = a.data() + H;
  double* gg = a.data() + 2 * H;
  double* go = a.data() + 3 * H;
  sigmoid_inplace(gi, H);
  sigmoid_inplace(gf, H);
  tanh_inplace(gg, H);
  sigmoid_inplace(go, H);

  double* hout = node.value.data();
  double* cout = node.value.data() + H;
  node.aux = Tensor({5 * H});  // [i, f, g, o, tanh(c')]
  for (int j = 0; j < H; ++j) {
    const double cj = gf[j] * cv[j] + gi[j] * gg[j];
    const double tj = std::tanh(cj);
    cout[j] = cj;
    hout[j] = go[j] * tj;
    node.aux[j] = gi[j];
    node.aux[H + j] = gf[j];
    node.aux[2 * H + j] = gg[j];
    node.aux[3 * H + j] = go[j];
    node.aux[4 * H + j] = tj;
  }
  if (!recording_) node.aux = Tensor();
  return Value{push(std::move(node))};
}

// ---------------------------------------------------------------------------
// structural ops

Value Tape::slice(Value x, int offset, int len) {
  const Tensor& xv = at(x).value;
  if (offset < 0 || len <= 0 || offset + len > xv.size())
    throw std::invalid_argument("slice: out of range");
  Node node;
  node.op = Op::Slice;
  node.in = {x.idx};
  node.iarg = {offset, len};
  node.value = Tensor({len});
  std::memcpy(node.value.data(), xv.data() + offset, sizeof(double) * static_cast<size_t>(len));
  return Value{push(std::move(node))};
}

Value Tape::reshape(Value x, std::vector<int> shape) {
  const Tensor& xv = at(x).value;
  if (shape_product(shape) != xv.size())
    throw std::invalid_argument("reshape: size mismatch " + xv.shape_str() + " -> " + shape_to_string(shape));
  Node node;
  node.op = Op::Reshape;
  node.in = {x.idx};
  node.value = Tensor(std::move(shape), xv.vec());
  return Value{push(std::move(node))};
}

Value Tape::channels_to_rows(Value chw) {
  const Tensor& xv = at(chw).value;
  if (xv.rank() != 3) throw std::invalid_argument("channels_to_rows: input must be [C,H,W]");
  const int C = xv.dim(0), cells = xv.dim(1) * xv.dim(2);
  Node node;
  node.op = Op::ChannelsToRows;
  node.in = {chw.idx};
  node.value = Tensor({cells, C});
  for (int c = 0; c < C; ++c)
    for (int xy = 0; xy < cells; ++xy)
      node.value[static_cast<int64_t>(xy) * C + c] = xv[static_cast<int64_t>(c) * cells + xy];
  return Value{push(std::move(node))};
}

Value Tape::weighted_row_sum(Value rows, Value w) {
  const Tensor& rv = at(rows).value;
  const Tensor& wv = at(w).value;
  if (rv.rank() != 2 || wv.size() != rv.dim(0))
    throw std::invalid_argument("weighted_row_sum: shapes " + rv.shape_str() + " and " + wv.shape_str());
  const int L = rv.dim(0), D = rv.dim(1);
  Node node;
  node.op = Op::WeightedRowSum;
  node.in = {rows.idx, w.idx};
  node.value = Tensor({D});
  const auto& K = kernels::table();
  for (int i = 0; i < L; ++i)
    K.axpy(wv[i], rv.data() + static_cast<int64_t>(i) * D, node.value.data(), static_cast<size_t>(D));
  return Value{push(std::move(node))};
}

Value Tape::select_row(Value rows, int row) {
  const Tensor& rv = at(rows).value;
  if (rv.rank() != 2 || row < 0 || row >= rv.dim(0))
    throw std::invalid_argument("select_row: bad row " + std::to_string(row) + " for " + rv.shape_str());
  const int D = rv.dim(1);
  Node node;
  node.op = Op::SelectRow;
  node.in = {rows.idx};
  node.iarg = {row};
  node.value = Tensor({D});
  std::memcpy(node.value.data(), rv.data() + static_cast<int64_t>(row) * D,
              sizeof(double) * static_cast<size_t>(D));
  return Value{push(std::move(node))};
}

Value Tape::pick(Value x, int index) {
  const Tensor& xv = at(x).value;
  if (index < 0 || index >= xv.size()) throw std::invalid_argument("pick: index out of range");
  Node node;
  node.op = Op::Pick;
  node.in = {x.idx};
  node.iarg = {index};
  node.value = Tensor::scalar(xv[index]);
  return Value{push(std::move(node))};
}

Value Tape::add(Value a, Value b) {
  const Tensor& av = at(a).value;
  const Tensor& bv = at(b).value;
  if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Node node;
  node.op = Op::Add;
  node.in = {a.idx, b.idx};
  node.value = av;
  for (int64_t i = 0; i < node.value.size(); ++i) node.value[i] += bv[i];
  return Value{push(std::move(node))};
}

Value Tape::sub(Value a, Value b) {
  const Tensor& av = at(a).value;
  const Tensor& bv = at(b).value;
  if (!av.same_shape(bv)) throw std::invalid_argument("sub: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Node node;
  node.op = Op::Sub;
  node.in = {a.idx, b.idx};
  node.value = av;
  for (int64_t i = 0; i < node.value.size(); ++i) node.value[i] -= bv[i];
  return Value{push(std::move(node))};
}

Value Tape::mul(Value a, Value b) {
  const Tensor& av = at(a).value;
  const Tensor& bv = at(b).value;
  if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Node node;
  node.op = Op::Mul;
  node.in = {a.idx, b.idx};
  node.value = av;
  for (int64_t i = 0; i < node.value.size(); ++i) node.value[i] *= bv[i];
  return Value{push(std::move(node))};
}

Value Tape::square(Value x) {
  Node node;
  node.op = Op::Square;
  node.in = {x.idx};
  node.value = at(x).value;
  for (int64_t i = 0; i < node.value.size(); ++i) node.value[i] *= node.value[i];
  return Value{push(std::move(node))};
}

Value Tape::scale(Value x, double c) {
  Node node;
  node.op = Op::Scale;
  node.in = {x.idx};
  node.darg = c;
  node.value = at(x).value;
  for (int64_t i = 0; i < node.value.size(); ++i) node.value[i] *= c;
  return Value{push(std::move(node))};
}

Value Tape::sum_all(Value x) {
  const Tensor& xv = at(x).value;
  Node node;
  node.op = Op::SumAll;
  node.in = {x.idx};
  double s = 0.0;
  for (int64_t i = 0; i < xv.size(); ++i) s += xv[i];
  node.value = Tensor::scalar(s);
  return Value{push(std::move(node))};
}

// ---------------------------------------------------------------------------
// backward

namespace {
void ensure_grad(Tensor& grad, const Tensor& like) {
  if (grad.empty()) grad = Tensor(like.shape());
}
}  // namespace

void Tape::backward(Value loss) {
  if (!recording_) throw std::logic_error("backward on a non-recording tape");
  check(loss);
  Node& top = nodes_[static_cast<size_t>(loss.idx)];
  if (top.value.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + top.value.shape_str());

  for (auto& n : nodes_) n.grad = Tensor();
  ensure_grad(top.grad, top.value);
  top.grad[0] = 1.0;

  const auto& K = kernels::table();
  for (int idx = loss.idx; idx >= 0; --idx) {
    Node& n = nodes_[static_cast<size_t>(idx)];
    if (n.grad.empty()) continue;  // not on the path to the loss
    const Tensor& gy = n.grad;
    auto input = [&](int slot) -> Node& { return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(slot)])]; };
    auto has_input = [&](int slot) { return n.in[static_cast<size_t>(slot)] >= 0; };
    auto input_grad = [&](int slot) -> Tensor& {
      Node& m = input(slot);
      ensure_grad(m.grad, m.value);
      return m.grad;
    };

    switch (n.op) {
      case Op::Const:
        break;
      case Op::ParamLeaf: {
        Tensor& pg = n.bound->grad;
        K.axpy(1.0, gy.data(), pg.data(), static_cast<size_t>(pg.size()));
        break;
      }
      case Op::Linear: {
        const Tensor& xv = input(0).value;
        const Tensor& wv = input(1).value;
        const int out = wv.dim(0), in = wv.dim(1);
        const int L = xv.rank() == 2 ? xv.dim(0) : 1;
        Tensor& dx = input_grad(0);
        Tensor& dw = input_grad(1);
        for (int l = 0; l < L; ++l) {
          const double* gyr = gy.data() + static_cast<int64_t>(l) * out;
          const double* xr = xv.data() + static_cast<int64_t>(l) * in;
          double* dxr = dx.data() + static_cast<int64_t>(l) * in;
          for (int o = 0; o < out; ++o) {
            const double g = gyr[o];
            if (g == 0.0) continue;
            K.axpy(g, wv.data() + static_cast<int64_t>(o) * in, dxr, static_cast<size_t>(in));
            K.axpy(g, xr, dw.data() + static_cast<int64_t>(o) * in, static_cast<size_t>(in));
          }
        }
        if (has_input(2)) {
          Tensor& db = input_grad(2);
          for (int l = 0; l < L; ++l)
            K.axpy(1.0, gy.data() + static_cast<int64_t>(l) * out, db.data(), static_cast<size_t>(out));
        }
        break;
      }
      case Op::Conv2d: {
        const Tensor& xv = input(0).value;
        const Tensor& kv = input(1).value;
        const ConvGeom g = conv_geometry(xv, kv, input(2).value, n.iarg[0]);
        const int cols = g.ci * g.k * g.k;
        const int cells = g.oh * g.ow;
        Tensor& dx = input_grad(0);
        Tensor& dk = input_grad(1);
        Tensor& db = input_grad(2);
        Tensor dpatch({cells, cols});
        for (int co = 0; co < g.co; ++co) {
          const double* gyc = gy.data() + static_cast<int64_t>(co) * cells;
          const double* krow = kv.data() + static_cast<int64_t>(co) * cols;
          double* dkrow = dk.data() + static_cast<int64_t>(co) * cols;
          double bsum = 0.0;
          for (int xy = 0; xy < cells; ++xy) {
            const double gv = gyc[xy];
            bsum += gv;
            if (gv == 0.0) continue;
            K.axpy(gv, n.aux.data() + static_cast<int64_t>(xy) * cols, dkrow, static_cast<size_t>(cols));
            K.axpy(gv, krow, dpatch.data() + static_cast<int64_t>(xy) * cols, static_cast<size_t>(cols));
          }
          db[co] += bsum;
        }
        // scatter patch gradients back to input cells
        for (int oy = 0; oy < g.oh; ++oy)
          for (int ox = 0; ox < g.ow; ++ox) {
            const double* row = dpatch.data() + static_cast<int64_t>(oy * g.ow + ox) * cols;
            for (int ci = 0; ci < g.ci; ++ci) {
              double* plane = dx.data() + static_cast<int64_t>(ci) * g.h * g.w;
              for (int ky = 0; ky < g.k; ++ky) {
                double* dst = plane + static_cast<int64_t>(oy * g.stride + ky) * g.w + ox * g.stride;
                const double* src = row + (ci * g.k + ky) * g.k;
                for (int kx = 0; kx < g.k; ++kx) dst[kx] += src[kx];
              }
            }
          }
        break;
      }
      case Op::AddRowBroadcast: {
        Tensor& drows = input_grad(0);
        Tensor& dv = input_grad(1);
        const int L = n.value.dim(0), w = n.value.dim(1);
        K.axpy(1.0, gy.data(), drows.data(), static_cast<size_t>(gy.size()));
        for (int l = 0; l < L; ++l)
          K.axpy(1.0, gy.data() + static_cast<int64_t>(l) * w, dv.data(), static_cast<size_t>(w));
        break;
      }
      case Op::Tanh: {
        Tensor& dx = input_grad(0);
        for (int64_t i = 0; i < gy.size(); ++i) {
          const double y = n.value[i];
          dx[i] += gy[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::Relu: {
        Tensor& dx = input_grad(0);
        const Tensor& xv = input(0).value;
        for (int64_t i = 0; i < gy.size(); ++i)
          if (xv[i] > 0.0) dx[i] += gy[i];
        break;
      }
      case Op::Softmax: {
        Tensor& dx = input_grad(0);
        double dotp = 0.0;
        for (int64_t i = 0; i < gy.size(); ++i) dotp += gy[i] * n.value[i];
        for (int64_t i = 0; i < gy.size(); ++i) dx[i] += n.value[i] * (gy[i] - dotp);
        break;
      }
      case Op::LogSoftmax: {
        Tensor& dx = input_grad(0);
        double gsum = 0.0;
        for (int64_t i = 0; i < gy.size(); ++i) gsum += gy[i];
        for (int64_t i = 0; i < gy.size(); ++i) dx[i] += gy[i] - std::exp(n.value[i]) * gsum;
        break;
      }
      case Op::Lstm: {
        const Tensor& xv = input(0).value;
        const Tensor& hv = input(1).value;
        const Tensor& cv = input(2).value;
        const Tensor& wx = input(3).value;
        const Tensor& wh = input(5).value;
        const int H = static_cast<int>(hv.size());
        const int D = static_cast<int>(xv.size());
        const double* gi = n.aux.data();
        const double* gf = n.aux.data() + H;
        const double* gg = n.aux.data() + 2 * H;
        const double* go = n.aux.data() + 3 * H;
        const double* tc = n.aux.data() + 4 * H;
        const double* dh = gy.data();
        const double* dc_out = gy.data() + H;

        std::vector<double> da(static_cast<size_t>(4 * H));
        Tensor& dcx = input_grad(2);
        for (int j = 0; j < H; ++j) {
          const double dcj = dc_out[j] + dh[j] * go[j] * (1.0 - tc[j] * tc[j]);
          const double doj = dh[j] * tc[j];
          const double dij = dcj * gg[j];
          const double dfj = dcj * cv[j];
          const double dgj = dcj * gi[j];
          dcx[j] += dcj * gf[j];
          da[static_cast<size_t>(j)] = dij * gi[j] * (1.0 - gi[j]);
          da[static_cast<size_t>(H + j)] = dfj * gf[j] * (1.0 - gf[j]);
          da[static_cast<size_t>(2 * H + j)] = dgj * (1.0 - gg[j] * gg[j]);
          da[static_cast<size_t>(3 * H + j)] = doj * go[j] * (1.0 - go[j]);
        }
        Tensor& dx = input_grad(0);
        Tensor& dhp = input_grad(1);
        Tensor& dwx = input_grad(3);
        Tensor& dbx = input_grad(4);
        Tensor& dwh = input_grad(5);
        Tensor& dbh = input_grad(6);
        for (int r = 0; r < 4 * H; ++r) {
          const double g = da[static_cast<size_t>(r)];
          if (g == 0.0) continue;
          K.axpy(g, wx.data() + static_cast<int64_t>(r) * D, dx.data(), static_cast<size_t>(D));
          K.axpy(g, wh.data() + static_cast<int64_t>(r) * H, dhp.data(), static_cast<size_t>(H));
          K.axpy(g, xv.data(), dwx.data() + static_cast<int64_t>(r) * D, static_cast<size_t>(D));
          K.axpy(g, hv.data(), dwh.data() + static_cast<int64_t>(r) * H, static_cast<size_t>(H));
          dbx[r] += g;
          dbh[r] += g;
        }
        break;
      }
      case Op::Slice: {
        Tensor& dx = input_grad(0);
        const int off = n.iarg[0], len = n.iarg[1];
        for (int i = 0; i < len; ++i) dx[off + i] += gy[i];
        break;
      }
      case Op::Reshape: {
        Tensor& dx = input_grad(0);
        K.axpy(1.0, gy.data(), dx.data(), static_cast<size_t>(gy.size()));
        break;
      }
      case Op::ChannelsToRows: {
        Tensor& dx = input_grad(0);
        const int cells = n.value.dim(0), C = n.value.dim(1);
        for (int c = 0; c < C; ++c)
          for (int xy = 0; xy < cells; ++xy)
            dx[static_cast<int64_t>(c) * cells + xy] += gy[static_cast<int64_t>(xy) * C + c];
        break;
      }
      case Op::WeightedRowSum: {
        const Tensor& rv = input(0).value;
        const Tensor& wv = input(1).value;
        Tensor& drows = input_grad(0);
        Tensor& dw = input_grad(1);
        const int L = rv.dim(0), D = rv.dim(1);
        for (int i = 0; i < L; ++i) {
          K.axpy(wv[i], gy.data(), drows.data() + static_cast<int64_t>(i) * D, static_cast<size_t>(D));
          dw[i] += K.dot(rv.data() + static_cast<int64_t>(i) * D, gy.data(), static_cast<size_t>(D));
        }
        break;
      }
      case Op::SelectRow: {
        Tensor& drows = input_grad(0);
        const int D = static_cast<int>(n.value.size());
        K.axpy(1.0, gy.data(), drows.data() + static_cast<int64_t>(n.iarg[0]) * D, static_cast<size_t>(D));
        break;
      }
      case Op::Pick: {
        Tensor& dx = input_grad(0);
        dx[n.iarg[0]] += gy[0];
        break;
      }
      case Op::Add: {
        Tensor& da = input_grad(0);
        Tensor& db = input_grad(1);
        K.axpy(1.0, gy.data(), da.data(), static_cast<size_t>(gy.size()));
        K.axpy(1.0, gy.data(), db.data(), static_cast<size_t>(gy.size()));
        break;
      }
      case Op::Sub: {
        Tensor& da = input_grad(0);
        Tensor& db = input_grad(1);
        K.axpy(1.0, gy.data(), da.data(), static_cast<size_t>(gy.size()));
        K.axpy(-1.0, gy.data(), db.data(), static_cast<size_t>(gy.size()));
        break;
      }
      case Op::Mul: {
        Tensor& da = input_grad(0);
        Tensor& db = input_grad(1);
        const Tensor& av = input(0).value;
        const Tensor& bv = input(1).value;
        for (int64_t i = 0; i < gy.size(); ++i) {
          da[i] += gy[i] * bv[i];
          db[i] += gy[i] * av[i];
        }
        break;
      }
      case Op::Square: {
        Tensor& dx = input_grad(0);
        const Tensor& xv = input(0).value;
        for (int64_t i = 0; i < gy.size(); ++i) dx[i] += 2.0 * xv[i] * gy[i];
        break;
      }
      case Op::Scale: {
        Tensor& dx = input_grad(0);
        K.axpy(n.darg, gy.data(), dx.data(), static_cast<size_t>(gy.size()));
        break;
      }
      case Op::SumAll: {
        Tensor& dx = input_grad(0);
        const double g = gy[0];
        for (int64_t i = 0; i < dx.size(); ++i) dx[i] += g;
        break;
      }
    }
  }
}

}  // namespace darqn
