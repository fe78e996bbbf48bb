#include "darqn/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "darqn/checkpoint.hpp"
#include "darqn/eval.hpp"
#include "darqn/kernels.hpp"
#include "darqn/optim.hpp"
#include "darqn/schedule.hpp"
#include "darqn/util.hpp"

namespace darqn {

SegmentData materialize(const Segment& s) {
  SegmentData d;
  d.frames.reserve(s.steps.size());
  for (const Transition* t : s.steps) {
    d.frames.push_back(t->frame);
    d.actions.push_back(t->action);
    d.rewards.push_back(t->reward);
    d.terminal.push_back(t->terminal);
  }
  if (s.bootstrap_frame) d.bootstrap = *s.bootstrap_frame;
  return d;
}

void sync_target(const ParameterSet& online, ParameterSet& target) {
  target.copy_values_from(online);
}

void transfer_cnn(const ParameterSet& soft_src, ParameterSet& hard_dst) {
  bool copied = false;
  for (size_t i = 0; i < hard_dst.count(); ++i) {
    Param& dst = hard_dst.nth(i);
    if (dst.name.rfind("conv", 0) != 0) continue;
    if (!soft_src.has(dst.name))
      throw std::invalid_argument("transfer_cnn: source has no array '" + dst.name + "'");
    const Param& src = soft_src.at(dst.name);
    if (!src.value.same_shape(dst.value))
      throw std::invalid_argument("transfer_cnn: conv geometry mismatch at '" + dst.name + "' (" +
                                  src.value.shape_str() + " vs " + dst.value.shape_str() + ")");
    dst.value.vec() = src.value.vec();
    copied = true;
  }
  if (!copied) throw std::invalid_argument("transfer_cnn: no conv arrays to copy");
}

std::vector<double> compute_targets(const Network& net, ParameterSet& theta_minus,
                                    const SegmentData& seg, double gamma) {
  const size_t u = seg.frames.size();
  std::vector<double> y(u, 0.0);
  // successor frames, in order; absent for the terminal tail step
  const size_t passes = seg.terminal.back() ? u - 1 : u;
  Tape t(false);
  RecurrentState state;
  ForwardOptions opt;
  opt.force_soft = true;
  bool started = false;
  for (size_t j = 0; j < u; ++j) {
    if (seg.terminal[j]) {
      if (j + 1 != u) throw std::logic_error("segment has a non-final terminal step");
      y[j] = seg.rewards[j];
      continue;
    }
    if (j >= passes) throw std::logic_error("segment is missing its bootstrap frame");
    if (!started) {
      state = net.begin_sequence(t);
      started = true;
    }
    const Tensor& successor = (j + 1 < u) ? seg.frames[j + 1] : seg.bootstrap;
    if (successor.empty()) throw std::logic_error("segment is missing its bootstrap frame");
    const StepOutput out = net.step(t, theta_minus, t.constant(successor), state, opt);
    const Tensor& q = t.value(out.q);
    double best = q[0];
    for (int64_t a = 1; a < q.size(); ++a) best = std::max(best, q[a]);
    y[j] = seg.rewards[j] + gamma * best;
  }
  return y;
}

LossTerms build_update_loss(Tape& t, const Network& net, ParameterSet& ps,
                            const std::vector<SegmentData>& batch,
                            const std::vector<std::vector<double>>& targets,
                            const UpdateOptions& opt) {
  if (batch.empty() || batch.size() != targets.size())
    throw std::invalid_argument("build_update_loss: batch/target size mismatch");
  const bool hard = net.arch() == Arch::DarqnHard;
  LossTerms terms;
  Value acc{};
  Value q_acc{};
  int64_t n_steps = 0;

  ForwardOptions fwd;
  fwd.rng = hard ? opt.rng : nullptr;
  fwd.mix_prob = opt.mix_prob;
  fwd.want_policy_nodes = true;

  for (size_t b = 0; b < batch.size(); ++b) {
    const SegmentData& seg = batch[b];
    if (seg.frames.size() != targets[b].size())
      throw std::invalid_argument("build_update_loss: unroll/target length mismatch");
    RecurrentState state = net.begin_sequence(t);
    for (size_t step = 0; step < seg.frames.size(); ++step) {
      const StepOutput out = net.step(t, ps, t.constant(seg.frames[step]), state, fwd);
      const Value y_const = t.constant(Tensor::scalar(targets[b][step]));
      const Value q_sa = t.pick(out.q, seg.actions[step]);
      const Value q_term = t.square(t.sub(q_sa, y_const));
      q_acc = q_acc.ok() ? t.add(q_acc, q_term) : q_term;
      n_steps += 1;

      if (hard) {
        // baseline head regresses toward Y on a detached hidden state
        const Value h_det = t.constant(t.value(out.h));
        const Value g_node = net.baseline(t, ps, h_det);
        const double g_value = t.value(g_node)[0];
        Value term = t.square(t.sub(g_node, y_const));
        if (out.att.sampled >= 0) {
          if (!out.att.logp.ok()) throw std::logic_error("sampled step without a recorded log-probability");
          const double coeff = opt.advantage_coeff_sign * (g_value - targets[b][step]);
          term = t.add(term, t.scale(out.att.logp, coeff));
          terms.policy_steps += 1;
          if (opt.entropy_coeff != 0.0) {
            // sum p*log p = -H; positive coefficient rewards entropy
            const Value logw = t.log_softmax(out.att.weights_node);
            term = t.add(term, t.scale(t.sum_all(t.mul(out.att.weights_node, logw)), opt.entropy_coeff));
          }
        } else if (out.att.mixed) {
          terms.soft_steps += 1;
        }
        acc = acc.ok() ? t.add(acc, term) : term;
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(n_steps);
  terms.q_loss = t.value(q_acc)[0] * inv;
  acc = acc.ok() ? t.add(q_acc, acc) : q_acc;
  terms.total = t.scale(acc, inv);
  return terms;
}

namespace {

struct CsvWriter {
  explicit CsvWriter(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw std::runtime_error("cannot open metrics file '" + path + "'");
    out << "epoch,steps,mean_eval_reward,mean_q,loss,epsilon,alpha\n";
    out.flush();
  }
  void row(int epoch, int64_t steps, double reward, double mean_q, double loss, double eps,
           double alpha) {
    out << epoch << ',' << steps << ',' << format_double(reward) << ',' << format_double(mean_q)
        << ',' << format_double(loss) << ',' << format_double(eps) << ',' << format_double(alpha)
        << '\n';
    out.flush();
  }
  std::ofstream out;
};

}  // namespace

TrainStats train(const Config& cfg) {
  validate_config(cfg);
  const Arch arch = arch_from_string(cfg.model);
  const Profile profile = profile_from_string(cfg.profile);

  std::filesystem::create_directories(cfg.out_dir);

  auto env = make_env(cfg.env, profile == Profile::Paper ? 84 : 24, Rng::derive(cfg.seed, 1));
  const Geometry geo = make_geometry(profile, env->action_count());
  const Network net(arch, geo);

  Rng init_rng(Rng::derive(cfg.seed, 0));
  ParameterSet params;
  init_params(params, arch, geo, init_rng);
  if (cfg.transfer_from != "none") {
    if (arch != Arch::DarqnHard)
      throw std::invalid_argument("transfer_from requires model = darqn_hard");
    ParameterSet soft;
    init_params(soft, Arch::DarqnSoft, geo, init_rng);
    load_checkpoint(cfg.transfer_from, Arch::DarqnSoft, soft);
    transfer_cnn(soft, params);
  }
  ParameterSet target = params.clone();

  RmspropOptions ropt{cfg.rms_decay, cfg.rms_momentum, cfg.rms_epsilon};
  auto optimizer = make_optimizer(cfg.optimizer, ropt);

  ReplayMemory replay(cfg.replay_capacity, cfg.unroll);
  Rng act_rng(Rng::derive(cfg.seed, 2));
  Rng sample_rng(Rng::derive(cfg.seed, 3));
  Rng update_rng(Rng::derive(cfg.seed, 4));

  const std::string metrics_path = cfg.out_dir + "/metrics.csv";
  CsvWriter csv(metrics_path);
  save_checkpoint(cfg.out_dir + "/checkpoint_initial.bin", arch, params);

  TrainStats stats;
  stats.metrics_path = metrics_path;

  const double advantage_sign = cfg.advantage_sign == "prose" ? 1.0 : -1.0;
  const double stop_threshold = stop_at_reward_value(cfg);
  const bool stopping = stop_at_reward_enabled(cfg);

  Tensor frame;
  Tensor h_act({is_recurrent(arch) ? geo.hidden : 1});
  Tensor c_act({is_recurrent(arch) ? geo.hidden : 1});
  bool episode_start = true;
  double loss_sum = 0.0;
  int64_t loss_count = 0;
  double epsilon = cfg.epsilon_start;
  double alpha = cfg.alpha_start;

  for (int64_t step = 0; step < cfg.total_steps; ++step) {
    if (episode_start) {
      frame = env->reset();
      h_act.fill(0.0);
      c_act.fill(0.0);
      episode_start = false;
    }
    epsilon = linear_schedule(step, cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_decay_steps);
    alpha = linear_schedule(step, cfg.alpha_start, cfg.alpha_end, cfg.alpha_decay_steps);

    // act
    int action;
    {
      Tape t(false);
      RecurrentState state;
      if (is_recurrent(arch)) {
        state.h = t.constant(h_act);
        state.c = t.constant(c_act);
      }
      ForwardOptions opt;
      opt.rng = arch == Arch::DarqnHard ? &act_rng : nullptr;
      opt.mix_prob = cfg.mix_prob;
      const StepOutput out = net.step(t, params, t.constant(frame), state, opt);
      if (is_recurrent(arch)) {
        h_act = t.value(state.h);
        c_act = t.value(state.c);
      }
      action = select_action(t.value(out.q), epsilon, act_rng);
    }
    StepResult result = env->step(action);
    double reward = result.reward;
    if (cfg.reward_clip) reward = std::clamp(reward, -1.0, 1.0);
    replay.append(Transition{frame, action, reward, result.terminal});
    frame = result.frame;
    if (result.terminal) episode_start = true;

    // update
    if ((step + 1) % cfg.update_period == 0 && replay.size() >= cfg.learn_start &&
        replay.can_sample(cfg.minibatch)) {
      std::vector<SegmentData> batch;
      batch.reserve(static_cast<size_t>(cfg.minibatch));
      for (const Segment& s : replay.sample_batch(cfg.minibatch, sample_rng))
        batch.push_back(materialize(s));
      std::vector<std::vector<double>> targets;
      targets.reserve(batch.size());
      for (const SegmentData& seg : batch) targets.push_back(compute_targets(net, target, seg, cfg.gamma));

      Tape t(true);
      UpdateOptions uopt;
      uopt.rng = &update_rng;
      uopt.mix_prob = cfg.mix_prob;
      uopt.advantage_coeff_sign = advantage_sign;
      uopt.entropy_coeff = cfg.entropy_coeff;
      const LossTerms loss = build_update_loss(t, net, params, batch, targets, uopt);
      if (!std::isfinite(t.value(loss.total)[0]))
        throw std::runtime_error("non-finite loss at step " + std::to_string(step + 1) +
                                 "; aborting training");
      params.zero_grads();
      t.backward(loss.total);
      optimizer->step(params, alpha);
      loss_sum += loss.q_loss;
      loss_count += 1;
      stats.updates += 1;
    }

    if ((step + 1) % cfg.target_sync_period == 0) sync_target(params, target);

    // evaluate + checkpoint per epoch
    if ((step + 1) % cfg.eval_period == 0) {
      stats.epochs += 1;
      auto eval_env = make_env(cfg.env, profile == Profile::Paper ? 84 : 24,
                               Rng::derive(cfg.seed, 1000 + static_cast<uint64_t>(stats.epochs)));
      NetworkPolicy policy(net, params, cfg.eval_epsilon,
                           Rng(Rng::derive(cfg.seed, 2000 + static_cast<uint64_t>(stats.epochs))),
                           cfg.mix_prob);
      const EvalReport rep = evaluate(policy, *eval_env, cfg.eval_episodes);
      const double mean_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
      csv.row(stats.epochs, step + 1, rep.mean_reward, rep.mean_max_q, mean_loss, epsilon, alpha);
      loss_sum = 0.0;
      loss_count = 0;
      save_checkpoint(cfg.out_dir + "/checkpoint_" + std::to_string(step + 1) + ".bin", arch, params);
      stats.last_eval_reward = rep.mean_reward;
      stats.steps = step + 1;
      if (stopping && rep.mean_reward >= stop_threshold) {
        stats.early_stopped = true;
        break;
      }
    }
    stats.steps = step + 1;
  }

  if (cfg.total_steps > 0) {
    stats.final_checkpoint = cfg.out_dir + "/checkpoint_final.bin";
    save_checkpoint(stats.final_checkpoint, arch, params);
  } else {
    stats.final_checkpoint = cfg.out_dir + "/checkpoint_initial.bin";
  }
  return stats;
}

}  // namespace darqn
