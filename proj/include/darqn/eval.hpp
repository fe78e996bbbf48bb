#pragma once

#include <cstdint>

#include "darqn/env.hpp"
#include "darqn/model.hpp"

namespace darqn {

struct EvalReport {
  int episodes = 0;
  double mean_reward = 0.0;
  double stddev_reward = 0.0;  // population stddev over episode returns
  double mean_max_q = 0.0;     // mean over steps of max_a Q
  int64_t steps = 0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual int act(const Tensor& frame, bool episode_start) = 0;
  virtual double last_max_q() const { return 0.0; }
};

// Epsilon-greedy policy over a network's Q output, carrying recurrent state
// across steps within an episode (zeroed at episode starts).
class NetworkPolicy : public Policy {
 public:
  NetworkPolicy(const Network& net, ParameterSet& ps, double epsilon, Rng rng,
                double mix_prob = 0.5);
  int act(const Tensor& frame, bool episode_start) override;
  double last_max_q() const override;

  const Tensor& last_q() const { return last_q_; }
  const Tensor& last_weights() const { return last_weights_; }  // empty without attention
  int last_sampled() const { return last_sampled_; }

 private:
  const Network& net_;
  ParameterSet& ps_;
  double epsilon_;
  Rng rng_;
  double mix_prob_;
  Tensor h_, c_;
  Tensor last_q_, last_weights_;
  int last_sampled_ = -1;
};

// Runs whole episodes until `episodes` are complete or `max_steps` env steps
// have been taken (0 = no step cap). Statistics cover completed episodes
// only; a trailing partial episode is discarded.
EvalReport evaluate(Policy& policy, Env& env, int episodes, int64_t max_steps = 0);

// Reads the board and tracks the falling ball; catches every episode.
class ScriptedCatchPolicy : public Policy {
 public:
  int act(const Tensor& frame, bool episode_start) override;
};

}  // namespace darqn
