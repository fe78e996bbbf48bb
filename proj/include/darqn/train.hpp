#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "darqn/config.hpp"
#include "darqn/env.hpp"
#include "darqn/model.hpp"
#include "darqn/replay.hpp"
#include "darqn/tape.hpp"

namespace darqn {

// Owning copy of a sampled segment; safe across replay mutation.
struct SegmentData {
  std::vector<Tensor> frames;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<bool> terminal;  // only the final step may be terminal
  Tensor bootstrap;            // successor of the final step; empty if terminal
};

SegmentData materialize(const Segment& s);

// theta_minus := deep copy of theta, bit-exact.
void sync_target(const ParameterSet& online, ParameterSet& target);

// Copies conv kernels and biases bit-exact from a trained soft-attention set
// into a hard-attention set; every other destination array is untouched.
void transfer_cnn(const ParameterSet& soft_src, ParameterSet& hard_dst);

// Y_t = r_t for the terminal step, else r_t + gamma * max_a Q(s_{t+1}, a; theta_minus).
// The target network re-unrolls over the successor frames from a zeroed
// state; in hard mode it uses the deterministic soft context. Values are
// plain doubles: nothing here joins the differentiable path.
std::vector<double> compute_targets(const Network& net, ParameterSet& theta_minus,
                                    const SegmentData& seg, double gamma);

struct UpdateOptions {
  Rng* rng = nullptr;         // hard-mode mixing/sampling during the unroll
  double mix_prob = 0.5;
  double advantage_coeff_sign = 1.0;  // +1: coeff (G-Y) on the loss ("prose"); -1: literal update rule
  double entropy_coeff = 0.0;
};

struct LossTerms {
  Value total{};        // scalar node: (q + policy + baseline + entropy) / (batch*unroll)
  double q_loss = 0.0;  // mean squared Q error, for logging
  int policy_steps = 0;
  int soft_steps = 0;  // hard mode: mixed steps seen during the unroll
};

// Builds the full update loss for a minibatch of segments on one tape.
// Gradients of the policy terms treat (G_t - Y_t) as a constant and stop at
// the step's own h_{t-1}; the conv stack receives the sum of the Q-path and
// policy-path gradients through ordinary accumulation.
LossTerms build_update_loss(Tape& t, const Network& net, ParameterSet& ps,
                            const std::vector<SegmentData>& batch,
                            const std::vector<std::vector<double>>& targets,
                            const UpdateOptions& opt);

struct TrainStats {
  int64_t steps = 0;
  int epochs = 0;
  int64_t updates = 0;
  bool early_stopped = false;
  double last_eval_reward = 0.0;
  std::string metrics_path;
  std::string final_checkpoint;
};

// The full loop: act epsilon-greedily, store, update every update_period
// steps, sync the target on its period, evaluate and checkpoint per epoch.
// Deterministic given the config seed.
TrainStats train(const Config& cfg);

}  // namespace darqn
