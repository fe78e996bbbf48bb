#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "darqn/params.hpp"
#include "darqn/rng.hpp"
#include "darqn/tape.hpp"

namespace darqn {

// Stable ids; serialized into checkpoints.
enum class Arch : uint32_t { Dqn = 1, Drqn = 2, DarqnSoft = 3, DarqnHard = 4 };
enum class Profile { Small, Paper };

Arch arch_from_string(const std::string& s);
std::string arch_to_string(Arch a);
Profile profile_from_string(const std::string& s);
std::string profile_to_string(Profile p);
bool is_recurrent(Arch a);
bool has_attention(Arch a);

struct ConvLayer {
  int out_ch;
  int k;
  int stride;
};

struct Geometry {
  int input_h = 0, input_w = 0;
  std::vector<ConvLayer> conv;
  int feature_dim = 0;  // D, channels of the last conv layer
  int grid_side = 0;    // m
  int locations = 0;    // L = m*m
  int hidden = 0;       // H, LSTM units (and DQN fully connected width)
  int actions = 0;
};

// paper: 84x84 in, 32@8x8/4 -> 64@4x4/2 -> 256@3x3/1, D=256, m=7, H=256
// small: 24x24 in,  8@4x4/2 -> 16@3x3/2,             D=16,  m=5, H=64
Geometry make_geometry(Profile p, int actions);

// (name, shape) pairs in a fixed order shared by init, counting, and
// checkpoint validation.
std::vector<std::pair<std::string, std::vector<int>>> enumerate_params(Arch a, const Geometry& g);
void init_params(ParameterSet& ps, Arch a, const Geometry& g, Rng& rng);
int64_t count_params(Arch a, const Geometry& g);

struct AttentionStep {
  Tensor weights;       // softmax weights over L locations (darqn archs)
  int sampled = -1;     // hard mode, non-mixed steps
  bool mixed = false;   // hard mode, soft-context steps
  Value logp{};         // log pi(sampled | v, h_prev); recording tapes only
  Value weights_node{};
};

struct StepOutput {
  Value q{};  // [A]
  Value h{};  // hidden state after the step; invalid for dqn
  AttentionStep att;
};

struct RecurrentState {
  Value h{}, c{};
};

struct ForwardOptions {
  Rng* rng = nullptr;            // hard-mode mixing and sampling
  double mix_prob = 0.5;         // hard mode: probability of a soft step
  bool force_soft = false;       // deterministic soft context (target passes)
  bool want_policy_nodes = false;
};

class Network {
 public:
  Network(Arch a, Geometry g);

  Arch arch() const { return arch_; }
  const Geometry& geometry() const { return geo_; }

  RecurrentState begin_sequence(Tape& t) const;
  StepOutput step(Tape& t, ParameterSet& ps, Value frame, RecurrentState& state,
                  const ForwardOptions& opt) const;

  // Conv stack output as L location vectors of width D, location-major.
  Value encode(Tape& t, ParameterSet& ps, Value frame) const;

  // score_i = a2 . tanh(a1 v_i + b1 + W h_prev) + b2, softmax-normalized by
  // the caller. The h contribution is computed once and shared across rows.
  Value attention_scores(Tape& t, ParameterSet& ps, Value grid, Value h_prev) const;

  // Scalar head on the (detached) hidden state; hard mode only.
  Value baseline(Tape& t, ParameterSet& ps, Value h) const;

 private:
  Value conv_stack(Tape& t, ParameterSet& ps, Value frame) const;
  Arch arch_;
  Geometry geo_;
};

// lstm_step followed by the Q head; shared by the recurrent architectures.
StepOutput q_step(Tape& t, ParameterSet& ps, Value z, RecurrentState& state, int hidden);

// Epsilon-greedy over a Q row; argmax ties break toward the lowest index.
int select_action(const Tensor& q, double epsilon, Rng& rng);

}  // namespace darqn
