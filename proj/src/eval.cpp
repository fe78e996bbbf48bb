#include "darqn/eval.hpp"

#include <cmath>
#include <stdexcept>

namespace darqn {

NetworkPolicy::NetworkPolicy(const Network& net, ParameterSet& ps, double epsilon, Rng rng,
                             double mix_prob)
    : net_(net), ps_(ps), epsilon_(epsilon), rng_(rng), mix_prob_(mix_prob) {
  if (is_recurrent(net_.arch())) {
    h_ = Tensor({net_.geometry().hidden});
    c_ = Tensor({net_.geometry().hidden});
  }
}

int NetworkPolicy::act(const Tensor& frame, bool episode_start) {
  if (episode_start && is_recurrent(net_.arch())) {
    h_.fill(0.0);
    c_.fill(0.0);
  }
  Tape t(false);
  RecurrentState state;
  if (is_recurrent(net_.arch())) {
    state.h = t.constant(h_);
    state.c = t.constant(c_);
  }
  ForwardOptions opt;
  opt.rng = net_.arch() == Arch::DarqnHard ? &rng_ : nullptr;
  opt.mix_prob = mix_prob_;
  const StepOutput out = net_.step(t, ps_, t.constant(frame), state, opt);
  last_q_ = t.value(out.q);
  last_weights_ = out.att.weights;
  last_sampled_ = out.att.sampled;
  if (is_recurrent(net_.arch())) {
    h_ = t.value(state.h);
    c_ = t.value(state.c);
  }
  return select_action(last_q_, epsilon_, rng_);
}

double NetworkPolicy::last_max_q() const {
  if (last_q_.empty()) return 0.0;
  double m = last_q_[0];
  for (int64_t i = 1; i < last_q_.size(); ++i) m = std::max(m, last_q_[i]);
  return m;
}

EvalReport evaluate(Policy& policy, Env& env, int episodes, int64_t max_steps) {
  if (episodes < 1) throw std::invalid_argument("evaluate: need at least one episode");
  EvalReport rep;
  double sum = 0.0, sumsq = 0.0, q_sum = 0.0;
  int done = 0;
  while (done < episodes && (max_steps == 0 || rep.steps < max_steps)) {
    Tensor frame = env.reset();
    bool first = true;
    double ret = 0.0;
    bool completed = false;
    while (max_steps == 0 || rep.steps < max_steps) {
      const int action = policy.act(frame, first);
      first = false;
      const StepResult r = env.step(action);
      rep.steps += 1;
      q_sum += policy.last_max_q();
      ret += r.reward;
      frame = r.frame;
      if (r.terminal) {
        completed = true;
        break;
      }
    }
    if (!completed) break;  // step budget ran out mid-episode
    sum += ret;
    sumsq += ret * ret;
    done += 1;
  }
  rep.episodes = done;
  if (done > 0) {
    rep.mean_reward = sum / done;
    const double var = std::max(0.0, sumsq / done - rep.mean_reward * rep.mean_reward);
    rep.stddev_reward = std::sqrt(var);
  }
  if (rep.steps > 0) rep.mean_max_q = q_sum / static_cast<double>(rep.steps);
  return rep;
}

int ScriptedCatchPolicy::act(const Tensor& frame, bool) {
  const int h = frame.dim(0), w = frame.dim(1);
  // paddle: center of the lit run on the bottom row
  int lo = -1, hi = -1;
  for (int x = 0; x < w; ++x) {
    if (frame[static_cast<int64_t>(h - 1) * w + x] > 0.5) {
      if (lo < 0) lo = x;
      hi = x;
    }
  }
  const int paddle = (lo + hi) / 2;
  // ball: the lone lit pixel above the bottom row
  int ball = paddle;
  for (int y = 0; y < h - 1; ++y)
    for (int x = 0; x < w; ++x)
      if (frame[static_cast<int64_t>(y) * w + x] > 0.5) ball = x;
  if (ball < paddle) return 0;
  if (ball > paddle) return 2;
  return 1;
}

}  // namespace darqn
