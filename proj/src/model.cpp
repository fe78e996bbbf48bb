#include "darqn/model.hpp"

#include <cmath>
#include <stdexcept>

namespace darqn {

Arch arch_from_string(const std::string& s) {
  if (s == "dqn") return Arch::Dqn;
  if (s == "drqn") return Arch::Drqn;
  if (s == "darqn_soft") return Arch::DarqnSoft;
  if (s == "darqn_hard") return Arch::DarqnHard;
  throw std::invalid_argument("unknown model '" + s + "' (expected dqn|drqn|darqn_soft|darqn_hard)");
}

std::string arch_to_string(Arch a) {
  switch (a) {
    case Arch::Dqn: return "dqn";
    case Arch::Drqn: return "drqn";
    case Arch::DarqnSoft: return "darqn_soft";
    case Arch::DarqnHard: return "darqn_hard";
  }
  throw std::invalid_argument("bad architecture id");
}

Profile profile_from_string(const std::string& s) {
  if (s == "small") return Profile::Small;
  if (s == "paper") return Profile::Paper;
  throw std::invalid_argument("unknown profile '" + s + "' (expected small|paper)");
}

std::string profile_to_string(Profile p) { return p == Profile::Small ? "small" : "paper"; }

bool is_recurrent(Arch a) { return a != Arch::Dqn; }
bool has_attention(Arch a) { return a == Arch::DarqnSoft || a == Arch::DarqnHard; }

Geometry make_geometry(Profile p, int actions) {
  if (actions < 2) throw std::invalid_argument("geometry: need at least 2 actions");
  Geometry g;
  if (p == Profile::Paper) {
    g.input_h = g.input_w = 84;
    g.conv = {{32, 8, 4}, {64, 4, 2}, {256, 3, 1}};
    g.hidden = 256;
  } else {
    g.input_h = g.input_w = 24;
    g.conv = {{8, 4, 2}, {16, 3, 2}};
    g.hidden = 64;
  }
  int side = g.input_h;
  for (const auto& c : g.conv) {
    const int span = side - c.k;
    if (span < 0 || span % c.stride != 0)
      throw std::logic_error("geometry: conv stack does not divide the input evenly");
    side = span / c.stride + 1;
  }
  g.grid_side = side;
  g.locations = side * side;
  g.feature_dim = g.conv.back().out_ch;
  g.actions = actions;
  return g;
}

std::vector<std::pair<std::string, std::vector<int>>> enumerate_params(Arch a, const Geometry& g) {
  std::vector<std::pair<std::string, std::vector<int>>> out;
  int in_ch = 1;
  for (size_t i = 0; i < g.conv.size(); ++i) {
    const auto& c = g.conv[i];
    const std::string base = "conv" + std::to_string(i + 1);
    out.emplace_back(base + ".w", std::vector<int>{c.out_ch, in_ch, c.k, c.k});
    out.emplace_back(base + ".b", std::vector<int>{c.out_ch});
    in_ch = c.out_ch;
  }
  const int D = g.feature_dim, H = g.hidden, L = g.locations, A = g.actions;
  if (has_attention(a)) {
    out.emplace_back("att.a1_w", std::vector<int>{D, D});
    out.emplace_back("att.a1_b", std::vector<int>{D});
    out.emplace_back("att.w_h", std::vector<int>{D, H});  // no bias on the recurrent term
    out.emplace_back("att.a2_w", std::vector<int>{1, D});
    out.emplace_back("att.a2_b", std::vector<int>{1});
  }
  if (a == Arch::Dqn) {
    out.emplace_back("fc.w", std::vector<int>{H, L * D});
    out.emplace_back("fc.b", std::vector<int>{H});
  } else {
    const int lstm_in = has_attention(a) ? D : L * D;
    out.emplace_back("lstm.w_x", std::vector<int>{4 * H, lstm_in});
    out.emplace_back("lstm.b_x", std::vector<int>{4 * H});
    out.emplace_back("lstm.w_h", std::vector<int>{4 * H, H});
    out.emplace_back("lstm.b_h", std::vector<int>{4 * H});
  }
  out.emplace_back("q.w", std::vector<int>{A, H});
  out.emplace_back("q.b", std::vector<int>{A});
  if (a == Arch::DarqnHard) {
    out.emplace_back("baseline.w", std::vector<int>{1, H});
    out.emplace_back("baseline.b", std::vector<int>{1});
  }
  return out;
}

namespace {
// fan-in per array, for uniform(-1/sqrt(fan), 1/sqrt(fan)) initialization;
// biases use the fan-in of the weight they pair with.
int64_t fan_in_of(const std::string& name, const std::vector<int>& shape,
                  const std::vector<std::pair<std::string, std::vector<int>>>& all) {
  if (shape.size() >= 2) {
    int64_t fan = 1;
    for (size_t i = 1; i < shape.size(); ++i) fan *= shape[i];
    return fan;
  }
  // bias: fan-in of the sibling weight ("b" -> "w", "b_x" -> "w_x", "a1_b" -> "a1_w")
  const auto dot = name.rfind('.');
  std::string leaf = name.substr(dot + 1);
  if (leaf == "b") leaf = "w";
  else if (leaf.rfind("b_", 0) == 0) leaf = "w_" + leaf.substr(2);
  else if (leaf.size() > 2 && leaf.compare(leaf.size() - 2, 2, "_b") == 0)
    leaf = leaf.substr(0, leaf.size() - 2) + "_w";
  const std::string sibling = name.substr(0, dot + 1) + leaf;
  for (const auto& [n, s] : all) {
    if (n != sibling) continue;
    int64_t fan = 1;
    for (size_t i = 1; i < s.size(); ++i) fan *= s[i];
    return fan;
  }
  return shape[0];
}
}  // namespace

void init_params(ParameterSet& ps, Arch a, const Geometry& g, Rng& rng) {
  const auto spec = enumerate_params(a, g);
  for (const auto& [name, shape] : spec) {
    Param& p = ps.add(name, shape);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in_of(name, shape, spec)));
    for (int64_t i = 0; i < p.value.size(); ++i) p.value[i] = rng.uniform(-bound, bound);
  }
}

int64_t count_params(Arch a, const Geometry& g) {
  int64_t n = 0;
  for (const auto& [name, shape] : enumerate_params(a, g)) n += shape_product(shape);
  return n;
}

// ---------------------------------------------------------------------------

Network::Network(Arch a, Geometry g) : arch_(a), geo_(std::move(g)) {}

Value Network::conv_stack(Tape& t, ParameterSet& ps, Value frame) const {
  const Tensor& fv = t.value(frame);
  if (fv.size() != static_cast<int64_t>(geo_.input_h) * geo_.input_w)
    throw std::invalid_argument("frame size " + fv.shape_str() + " does not match network input " +
                                std::to_string(geo_.input_h) + "x" + std::to_string(geo_.input_w));
  Value x = t.reshape(frame, {1, geo_.input_h, geo_.input_w});
  for (size_t i = 0; i < geo_.conv.size(); ++i) {
    const std::string base = "conv" + std::to_string(i + 1);
    x = t.conv2d(x, t.param(ps.at(base + ".w")), t.param(ps.at(base + ".b")), geo_.conv[i].stride);
    x = t.relu(x);
  }
  return x;
}

Value Network::encode(Tape& t, ParameterSet& ps, Value frame) const {
  return t.channels_to_rows(conv_stack(t, ps, frame));
}

Value Network::attention_scores(Tape& t, ParameterSet& ps, Value grid, Value h_prev) const {
  Value inner = t.linear(grid, t.param(ps.at("att.a1_w")), t.param(ps.at("att.a1_b")));
  Value hterm = t.linear(h_prev, t.param(ps.at("att.w_h")));
  Value act = t.tanh_op(t.add_row_broadcast(inner, hterm));
  Value scores = t.linear(act, t.param(ps.at("att.a2_w")), t.param(ps.at("att.a2_b")));  // [L,1]
  return t.reshape(scores, {geo_.locations});
}

Value Network::baseline(Tape& t, ParameterSet& ps, Value h) const {
  if (arch_ != Arch::DarqnHard)
    throw std::logic_error("baseline head only exists on the hard-attention architecture");
  return t.linear(h, t.param(ps.at("baseline.w")), t.param(ps.at("baseline.b")));
}

RecurrentState Network::begin_sequence(Tape& t) const {
  RecurrentState s;
  if (is_recurrent(arch_)) {
    s.h = t.constant(Tensor({geo_.hidden}));
    s.c = t.constant(Tensor({geo_.hidden}));
  }
  return s;
}

StepOutput q_step(Tape& t, ParameterSet& ps, Value z, RecurrentState& state, int hidden) {
  LstmParamRefs refs{t.param(ps.at("lstm.w_x")), t.param(ps.at("lstm.b_x")),
                     t.param(ps.at("lstm.w_h")), t.param(ps.at("lstm.b_h"))};
  Value hc = t.lstm_step(z, state.h, state.c, refs);
  state.h = t.slice(hc, 0, hidden);
  state.c = t.slice(hc, hidden, hidden);
  StepOutput out;
  out.h = state.h;
  out.q = t.linear(state.h, t.param(ps.at("q.w")), t.param(ps.at("q.b")));
  return out;
}

StepOutput Network::step(Tape& t, ParameterSet& ps, Value frame, RecurrentState& state,
                         const ForwardOptions& opt) const {
  if (arch_ == Arch::Dqn) {
    Value flat = t.reshape(conv_stack(t, ps, frame), {geo_.locations * geo_.feature_dim});
    Value fc = t.relu(t.linear(flat, t.param(ps.at("fc.w")), t.param(ps.at("fc.b"))));
    StepOutput out;
    out.q = t.linear(fc, t.param(ps.at("q.w")), t.param(ps.at("q.b")));
    return out;
  }
  if (arch_ == Arch::Drqn) {
    Value flat = t.reshape(conv_stack(t, ps, frame), {geo_.locations * geo_.feature_dim});
    return q_step(t, ps, flat, state, geo_.hidden);
  }

  Value grid = encode(t, ps, frame);
  Value z;
  AttentionStep att;
  const bool soft_step =
      arch_ == Arch::DarqnSoft || opt.force_soft ||
      (opt.rng != nullptr && opt.rng->bernoulli(opt.mix_prob));
  if (arch_ == Arch::DarqnHard && !soft_step && opt.rng == nullptr)
    throw std::invalid_argument("hard-attention forward requires an rng");

  if (soft_step) {
    Value scores = attention_scores(t, ps, grid, state.h);
    Value w = t.softmax(scores);
    z = t.weighted_row_sum(grid, w);
    att.weights_node = w;
    att.weights = t.value(w);
    att.mixed = arch_ == Arch::DarqnHard;
  } else {
    // Sampled location: the score pass sees a detached copy of h_prev so the
    // policy-gradient term cannot reach earlier timesteps.
    Value h_det = t.constant(t.value(state.h));
    Value scores = attention_scores(t, ps, grid, h_det);
    Value w = t.softmax(scores);
    att.weights_node = w;
    att.weights = t.value(w);
    att.sampled = opt.rng->categorical(att.weights.data(), static_cast<int>(att.weights.size()));
    z = t.select_row(grid, att.sampled);
    if (opt.want_policy_nodes) att.logp = t.pick(t.log_softmax(scores), att.sampled);
  }

  StepOutput out = q_step(t, ps, z, state, geo_.hidden);
  out.att = std::move(att);
  return out;
}

int select_action(const Tensor& q, double epsilon, Rng& rng) {
  if (q.size() == 0) throw std::invalid_argument("select_action: empty q-values");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("select_action: epsilon in [0,1]");
  const int n = static_cast<int>(q.size());
  if (epsilon > 0.0 && rng.bernoulli(epsilon)) return rng.uniform_int(n);
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (q[i] > q[best]) best = i;
  return best;
}

}  // namespace darqn
