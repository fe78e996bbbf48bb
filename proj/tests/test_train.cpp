#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "darqn/checkpoint.hpp"
#include "darqn/train.hpp"
#include "test_support.hpp"

using namespace darqn;
using namespace darqn::testsupport;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// all-zero weights except a fixed q bias, so Q(s, a) = q_bias[a] everywhere
ParameterSet rigged_params(Arch arch, const Geometry& g, const Tensor& q_bias) {
  ParameterSet ps;
  Rng rng(1);
  init_params(ps, arch, g, rng);
  for (size_t i = 0; i < ps.count(); ++i) ps.nth(i).value.fill(0.0);
  ps.at("q.b").value = q_bias;
  return ps;
}

SegmentData one_step_segment(const Tensor& frame, int action, double reward, bool terminal,
                             const Tensor& successor = Tensor()) {
  SegmentData seg;
  seg.frames = {frame};
  seg.actions = {action};
  seg.rewards = {reward};
  seg.terminal = {terminal};
  seg.bootstrap = successor;
  return seg;
}

}  // namespace

TEST_CASE("compute_targets: terminal step returns the raw reward") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet target = rigged_params(Arch::DarqnSoft, g, Tensor({3}, {2.0, 1.0, 0.0}));
  const SegmentData seg = one_step_segment(Tensor({24, 24}), 0, 1.0, true);
  const auto y = compute_targets(net, target, seg, 0.99);
  CHECK(y.size() == 1);
  CHECK(y[0] == 1.0);
}

TEST_CASE("compute_targets: r + gamma * max target Q") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet target = rigged_params(Arch::DarqnSoft, g, Tensor({3}, {2.0, 1.0, 0.0}));
  const SegmentData seg = one_step_segment(Tensor({24, 24}), 0, 1.0, false, Tensor({24, 24}));
  const auto y = compute_targets(net, target, seg, 0.99);
  CHECK(std::fabs(y[0] - 2.98) <= 1e-12);
}

TEST_CASE("compute_targets: gamma = 0 reduces to the rewards") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet target;
  Rng rng(2);
  init_params(target, Arch::DarqnSoft, g, rng);
  Rng frng(3);
  SegmentData seg;
  for (int i = 0; i < 4; ++i) {
    seg.frames.push_back(random_tensor({24, 24}, frng, 0.0, 1.0));
    seg.actions.push_back(i % 3);
    seg.rewards.push_back(0.25 * i - 0.3);
    seg.terminal.push_back(false);
  }
  seg.bootstrap = random_tensor({24, 24}, frng, 0.0, 1.0);
  const auto y = compute_targets(net, target, seg, 0.0);
  for (int i = 0; i < 4; ++i) CHECK(y[i] == seg.rewards[i]);
}

TEST_CASE("compute_targets: target unroll carries recurrent state across successors") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet target;
  Rng rng(4);
  init_params(target, Arch::DarqnSoft, g, rng);
  Rng frng(5);
  SegmentData seg;
  for (int i = 0; i < 3; ++i) {
    seg.frames.push_back(random_tensor({24, 24}, frng, 0.0, 1.0));
    seg.actions.push_back(0);
    seg.rewards.push_back(0.0);
    seg.terminal.push_back(false);
  }
  seg.bootstrap = random_tensor({24, 24}, frng, 0.0, 1.0);
  const auto y = compute_targets(net, target, seg, 1.0);

  // independent check for step 0: a fresh zero-state pass over frames[1]
  Tape t(false);
  RecurrentState st = net.begin_sequence(t);
  ForwardOptions opt;
  const StepOutput out = net.step(t, target, t.constant(seg.frames[1]), st, opt);
  double best = t.value(out.q)[0];
  for (int a = 1; a < 3; ++a) best = std::max(best, t.value(out.q)[a]);
  CHECK(std::fabs(y[0] - best) <= 1e-12);

  // step 1 bootstraps from the SECOND step of the same unroll, not a fresh one
  const StepOutput out2 = net.step(t, target, t.constant(seg.frames[2]), st, opt);
  double best2 = t.value(out2.q)[0];
  for (int a = 1; a < 3; ++a) best2 = std::max(best2, t.value(out2.q)[a]);
  CHECK(std::fabs(y[1] - best2) <= 1e-12);
}

TEST_CASE("q_loss: exact targets give zero loss and zero gradients") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet ps;
  Rng rng(6);
  init_params(ps, Arch::DarqnSoft, g, rng);
  Rng frng(7);
  SegmentData seg;
  for (int i = 0; i < 2; ++i) {
    seg.frames.push_back(random_tensor({24, 24}, frng, 0.0, 1.0));
    seg.actions.push_back(i);
    seg.rewards.push_back(0.0);
    seg.terminal.push_back(false);
  }
  seg.bootstrap = random_tensor({24, 24}, frng, 0.0, 1.0);

  // read off the on-policy Q values, then use them as the targets
  std::vector<double> y;
  {
    Tape t(false);
    RecurrentState st = net.begin_sequence(t);
    ForwardOptions opt;
    for (size_t i = 0; i < seg.frames.size(); ++i) {
      const StepOutput out = net.step(t, ps, t.constant(seg.frames[i]), st, opt);
      y.push_back(t.value(out.q)[seg.actions[i]]);
    }
  }
  Tape t(true);
  const LossTerms terms = build_update_loss(t, net, ps, {seg}, {y}, UpdateOptions{});
  CHECK(t.value(terms.total)[0] == 0.0);
  ps.zero_grads();
  t.backward(terms.total);
  for (size_t i = 0; i < ps.count(); ++i)
    for (int64_t j = 0; j < ps.nth(i).grad.size(); ++j) CHECK(ps.nth(i).grad[j] == 0.0);
}

TEST_CASE("q_loss: single step with Q=0 and Y=2 gives loss 4") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet ps = rigged_params(Arch::DarqnSoft, g, Tensor({3}));
  const SegmentData seg = one_step_segment(Tensor({24, 24}), 1, 0.0, true);
  Tape t(true);
  const LossTerms terms = build_update_loss(t, net, ps, {seg}, {{2.0}}, UpdateOptions{});
  CHECK(t.value(terms.total)[0] == 4.0);
  CHECK(terms.q_loss == 4.0);
}

TEST_CASE("q_loss gradient: -2(Y-Q)/N at the taken action bias, zero at the others") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet ps = rigged_params(Arch::DarqnSoft, g, Tensor({3}, {0.5, -0.2, 0.1}));
  Rng frng(8);
  const Tensor frame = random_tensor({24, 24}, frng, 0.0, 1.0);
  // batch of two single-step segments -> N = 2
  const SegmentData s1 = one_step_segment(frame, 1, 0.0, true);
  const SegmentData s2 = one_step_segment(frame, 1, 0.0, true);
  Tape t(true);
  const LossTerms terms = build_update_loss(t, net, ps, {s1, s2}, {{2.0}, {1.5}}, UpdateOptions{});
  ps.zero_grads();
  t.backward(terms.total);
  const double expect = (-2.0 * (2.0 - (-0.2)) - 2.0 * (1.5 - (-0.2))) / 2.0;
  CHECK(std::fabs(ps.at("q.b").grad[1] - expect) <= 1e-12);
  CHECK(ps.at("q.b").grad[0] == 0.0);
  CHECK(ps.at("q.b").grad[2] == 0.0);
}

TEST_CASE("hard mode: zero advantage means no attention or baseline gradient") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnHard, g);
  ParameterSet ps;
  Rng rng(9);
  init_params(ps, Arch::DarqnHard, g, rng);
  // G is constant c regardless of h; with Y == c the advantage vanishes
  ps.at("baseline.w").value.fill(0.0);
  ps.at("baseline.b").value[0] = 0.7;

  Rng frng(10);
  SegmentData seg;
  for (int i = 0; i < 3; ++i) {
    seg.frames.push_back(random_tensor({24, 24}, frng, 0.0, 1.0));
    seg.actions.push_back(i % 3);
    seg.rewards.push_back(0.0);
    seg.terminal.push_back(false);
  }
  seg.bootstrap = random_tensor({24, 24}, frng, 0.0, 1.0);

  Tape t(true);
  Rng urng(11);
  UpdateOptions opt;
  opt.rng = &urng;
  opt.mix_prob = 0.0;  // every step sampled: no soft-path gradient reaches the scores
  const LossTerms terms = build_update_loss(t, net, ps, {seg}, {{0.7, 0.7, 0.7}}, opt);
  CHECK(terms.policy_steps == 3);
  ps.zero_grads();
  t.backward(terms.total);
  for (const char* name : {"att.a1_w", "att.a1_b", "att.w_h", "att.a2_w", "att.a2_b",
                           "baseline.w", "baseline.b"}) {
    const Tensor& grad = ps.at(name).grad;
    for (int64_t j = 0; j < grad.size(); ++j) CHECK(grad[j] == 0.0);
  }
}

TEST_CASE("hard mode: a single attention location makes log pi identically zero") {
  Geometry g;
  g.input_h = g.input_w = 6;
  g.conv = {{4, 6, 1}};  // one 6x6 kernel -> 1x1 grid
  g.feature_dim = 4;
  g.grid_side = 1;
  g.locations = 1;
  g.hidden = 5;
  g.actions = 2;
  Network net(Arch::DarqnHard, g);
  ParameterSet ps;
  Rng rng(12);
  init_params(ps, Arch::DarqnHard, g, rng);

  Rng frng(13);
  const SegmentData seg = one_step_segment(random_tensor({6, 6}, frng, 0.0, 1.0), 0, 0.2, true);
  Tape t(true);
  Rng urng(14);
  UpdateOptions opt;
  opt.rng = &urng;
  opt.mix_prob = 0.0;
  const LossTerms terms = build_update_loss(t, net, ps, {seg}, {{0.2}}, opt);
  CHECK(terms.policy_steps == 1);
  ps.zero_grads();
  t.backward(terms.total);
  for (const char* name : {"att.a1_w", "att.a1_b", "att.w_h", "att.a2_w", "att.a2_b"}) {
    const Tensor& grad = ps.at(name).grad;
    for (int64_t j = 0; j < grad.size(); ++j) CHECK(grad[j] == 0.0);
  }
}

TEST_CASE("hard mode: policy and soft step counters partition the unroll") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnHard, g);
  ParameterSet ps;
  Rng rng(15);
  init_params(ps, Arch::DarqnHard, g, rng);
  Rng frng(16);
  std::vector<SegmentData> batch;
  for (int b = 0; b < 8; ++b) {
    SegmentData seg;
    for (int i = 0; i < 4; ++i) {
      seg.frames.push_back(random_tensor({24, 24}, frng, 0.0, 1.0));
      seg.actions.push_back(0);
      seg.rewards.push_back(0.0);
      seg.terminal.push_back(false);
    }
    seg.bootstrap = random_tensor({24, 24}, frng, 0.0, 1.0);
    batch.push_back(std::move(seg));
  }
  std::vector<std::vector<double>> targets(8, std::vector<double>(4, 0.0));
  Tape t(true);
  Rng urng(17);
  UpdateOptions opt;
  opt.rng = &urng;
  opt.mix_prob = 0.5;
  const LossTerms terms = build_update_loss(t, net, ps, batch, targets, opt);
  CHECK(terms.policy_steps + terms.soft_steps == 32);
  CHECK(terms.policy_steps > 0);
  CHECK(terms.soft_steps > 0);
}

TEST_CASE("sync_target: bit-exact copy, isolated from later online updates") {
  const Geometry g = make_geometry(Profile::Small, 3);
  ParameterSet online, target;
  Rng rng(18), rng2(19);
  init_params(online, Arch::DarqnSoft, g, rng);
  init_params(target, Arch::DarqnSoft, g, rng2);

  sync_target(online, target);
  for (size_t i = 0; i < online.count(); ++i)
    CHECK(target.nth(i).value.vec() == online.nth(i).value.vec());

  Network net(Arch::DarqnSoft, g);
  Rng frng(20);
  const Tensor frame = random_tensor({24, 24}, frng, 0.0, 1.0);
  auto q_of = [&](ParameterSet& p) {
    Tape t(false);
    RecurrentState st = net.begin_sequence(t);
    ForwardOptions opt;
    return t.value(net.step(t, p, t.constant(frame), st, opt).q).vec();
  };
  CHECK(q_of(online) == q_of(target));

  const auto frozen = target.nth(0).value.vec();
  online.nth(0).value[0] += 0.5;  // online moves on
  CHECK(target.nth(0).value.vec() == frozen);
  CHECK(q_of(online) != q_of(target));
}

TEST_CASE("targets are gradient-isolated from the online parameters") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet online, target;
  Rng rng(21), rng2(22);
  init_params(online, Arch::DarqnSoft, g, rng);
  init_params(target, Arch::DarqnSoft, g, rng2);

  Rng frng(23);
  SegmentData seg = one_step_segment(random_tensor({24, 24}, frng, 0.0, 1.0), 0, 0.3, false,
                                     random_tensor({24, 24}, frng, 0.0, 1.0));
  const auto y1 = compute_targets(net, target, seg, 0.9);
  online.nth(0).value[0] += 1.0;  // perturb online weights
  const auto y2 = compute_targets(net, target, seg, 0.9);
  CHECK(y1 == y2);

  // and backward through the update loss leaves the target set untouched
  Tape t(true);
  const LossTerms terms = build_update_loss(t, net, online, {seg}, {y1}, UpdateOptions{});
  online.zero_grads();
  target.zero_grads();
  t.backward(terms.total);
  for (size_t i = 0; i < target.count(); ++i)
    for (int64_t j = 0; j < target.nth(i).grad.size(); ++j) CHECK(target.nth(i).grad[j] == 0.0);
}

TEST_CASE("train: zero total steps leaves an empty log and only the initial checkpoint") {
  Config cfg;
  cfg.total_steps = 0;
  cfg.out_dir = "/tmp/darqn_train_zero";
  std::filesystem::remove_all(cfg.out_dir);
  const TrainStats stats = train(cfg);
  CHECK(stats.steps == 0);
  CHECK(stats.epochs == 0);
  CHECK(read_file(cfg.out_dir + "/metrics.csv") == "epoch,steps,mean_eval_reward,mean_q,loss,epsilon,alpha\n");
  CHECK(std::filesystem::exists(cfg.out_dir + "/checkpoint_initial.bin"));
  CHECK_FALSE(std::filesystem::exists(cfg.out_dir + "/checkpoint_final.bin"));
  CHECK(stats.final_checkpoint == cfg.out_dir + "/checkpoint_initial.bin");
  std::filesystem::remove_all(cfg.out_dir);
}

TEST_CASE("train: identical seeds give byte-identical metrics") {
  Config cfg;
  cfg.model = "darqn_soft";
  cfg.total_steps = 500;
  cfg.eval_period = 250;
  cfg.eval_episodes = 3;
  cfg.learn_start = 64;
  cfg.minibatch = 4;
  cfg.replay_capacity = 1000;
  cfg.target_sync_period = 100;
  cfg.alpha_start = 0.001;
  cfg.seed = 2024;

  cfg.out_dir = "/tmp/darqn_train_det_a";
  std::filesystem::remove_all(cfg.out_dir);
  train(cfg);
  const std::string a = read_file(cfg.out_dir + "/metrics.csv");

  cfg.out_dir = "/tmp/darqn_train_det_b";
  std::filesystem::remove_all(cfg.out_dir);
  train(cfg);
  const std::string b = read_file(cfg.out_dir + "/metrics.csv");
  CHECK(a == b);
  CHECK(a.find("epoch,steps,") == 0);
  CHECK(std::count(a.begin(), a.end(), '\n') == 3);  // header + 2 epochs
  std::filesystem::remove_all("/tmp/darqn_train_det_a");
  std::filesystem::remove_all("/tmp/darqn_train_det_b");
}

TEST_CASE("train: hard mode runs and is deterministic too") {
  Config cfg;
  cfg.model = "darqn_hard";
  cfg.total_steps = 400;
  cfg.eval_period = 200;
  cfg.eval_episodes = 2;
  cfg.learn_start = 64;
  cfg.minibatch = 4;
  cfg.replay_capacity = 1000;
  cfg.target_sync_period = 100;
  cfg.alpha_start = 0.001;
  cfg.seed = 7;

  cfg.out_dir = "/tmp/darqn_train_hard_a";
  std::filesystem::remove_all(cfg.out_dir);
  train(cfg);
  const std::string a = read_file(cfg.out_dir + "/metrics.csv");
  cfg.out_dir = "/tmp/darqn_train_hard_b";
  std::filesystem::remove_all(cfg.out_dir);
  train(cfg);
  CHECK(read_file(cfg.out_dir + "/metrics.csv") == a);
  std::filesystem::remove_all("/tmp/darqn_train_hard_a");
  std::filesystem::remove_all("/tmp/darqn_train_hard_b");
}

TEST_CASE("train: epsilon and alpha columns decay monotonically") {
  Config cfg;
  cfg.total_steps = 600;
  cfg.eval_period = 100;
  cfg.eval_episodes = 2;
  cfg.learn_start = 10000;  // no updates; we only watch the schedules
  cfg.epsilon_decay_steps = 400;
  cfg.alpha_decay_steps = 400;
  cfg.out_dir = "/tmp/darqn_train_sched";
  std::filesystem::remove_all(cfg.out_dir);
  train(cfg);
  std::ifstream f(cfg.out_dir + "/metrics.csv");
  std::string line;
  std::getline(f, line);  // header
  double prev_eps = 2.0, prev_alpha = 2.0;
  int rows = 0;
  while (std::getline(f, line)) {
    // columns: epoch,steps,mean_eval_reward,mean_q,loss,epsilon,alpha
    const auto last_comma = line.rfind(',');
    const auto before = line.rfind(',', last_comma - 1);
    const double alpha = std::stod(line.substr(last_comma + 1));
    const double eps = std::stod(line.substr(before + 1, last_comma - before - 1));
    CHECK(eps <= prev_eps);
    CHECK(alpha <= prev_alpha);
    prev_eps = eps;
    prev_alpha = alpha;
    rows += 1;
  }
  CHECK(rows == 6);
  std::filesystem::remove_all(cfg.out_dir);
}

TEST_CASE("train: non-finite loss aborts with a diagnostic") {
  Config cfg;
  cfg.model = "dqn";  // no softmax on the forward path, so the divergence reaches the loss check
  cfg.total_steps = 400;
  cfg.eval_period = 1000;
  cfg.learn_start = 50;
  cfg.minibatch = 4;
  cfg.replay_capacity = 1000;
  cfg.alpha_start = 1e200;  // guaranteed blow-up
  cfg.alpha_end = 1e200;
  cfg.out_dir = "/tmp/darqn_train_nan";
  std::filesystem::remove_all(cfg.out_dir);
  CHECK_THROWS_WITH_AS(train(cfg), doctest::Contains("non-finite loss"), std::runtime_error);
  std::filesystem::remove_all(cfg.out_dir);
}

TEST_CASE("train: transfer_from seeds the conv stack from a soft checkpoint") {
  const Geometry g = make_geometry(Profile::Small, 3);
  ParameterSet soft;
  Rng rng(24);
  init_params(soft, Arch::DarqnSoft, g, rng);
  const std::string soft_path = "/tmp/darqn_soft_donor.bin";
  save_checkpoint(soft_path, Arch::DarqnSoft, soft);

  Config cfg;
  cfg.model = "darqn_hard";
  cfg.transfer_from = soft_path;
  cfg.total_steps = 0;
  cfg.out_dir = "/tmp/darqn_train_transfer";
  std::filesystem::remove_all(cfg.out_dir);
  train(cfg);

  ParameterSet hard;
  Rng rng2(25);
  init_params(hard, Arch::DarqnHard, g, rng2);
  load_checkpoint(cfg.out_dir + "/checkpoint_initial.bin", Arch::DarqnHard, hard);
  CHECK(hard.at("conv1.w").value.vec() == soft.at("conv1.w").value.vec());
  CHECK(hard.at("conv2.b").value.vec() == soft.at("conv2.b").value.vec());

  // sanity: a dqn model must refuse the transfer flag
  cfg.model = "dqn";
  CHECK_THROWS_AS(train(cfg), std::invalid_argument);
  std::remove(soft_path.c_str());
  std::filesystem::remove_all(cfg.out_dir);
}
