#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "darqn/model.hpp"
#include "test_support.hpp"

using namespace darqn;
using namespace darqn::testsupport;

TEST_CASE("geometry: paper profile gives L=49 D=256, small gives L=25 D=16") {
  const Geometry paper = make_geometry(Profile::Paper, 18);
  CHECK(paper.grid_side == 7);
  CHECK(paper.locations == 49);
  CHECK(paper.feature_dim == 256);
  CHECK(paper.hidden == 256);
  const Geometry small = make_geometry(Profile::Small, 3);
  CHECK(small.grid_side == 5);
  CHECK(small.locations == 25);
  CHECK(small.feature_dim == 16);
  CHECK(small.hidden == 64);
}

TEST_CASE("parameter counts: paper geometry, 18 actions") {
  const Geometry g = make_geometry(Profile::Paper, 18);
  CHECK(count_params(Arch::DarqnSoft, g) == 845171);
  CHECK(count_params(Arch::DarqnHard, g) == 845428);
  CHECK(count_params(Arch::DarqnHard, g) - count_params(Arch::DarqnSoft, g) == 257);

  // conv stack alone: 2,080 + 32,832 + 147,712
  int64_t conv = 0;
  for (const auto& [name, shape] : enumerate_params(Arch::DarqnSoft, g))
    if (name.rfind("conv", 0) == 0) conv += shape_product(shape);
  CHECK(conv == 182624);

  // 4 actions shrink only the q head: 845171 - 14*(256+1) = 841573... via head arithmetic
  const Geometry g4 = make_geometry(Profile::Paper, 4);
  CHECK(count_params(Arch::DarqnSoft, g4) == 841573);
}

TEST_CASE("parameter counts: lstm block and q head arithmetic") {
  const Geometry g = make_geometry(Profile::Paper, 18);
  int64_t lstm = 0, qhead = 0, baseline = 0;
  for (const auto& [name, shape] : enumerate_params(Arch::DarqnHard, g)) {
    if (name.rfind("lstm", 0) == 0) lstm += shape_product(shape);
    if (name.rfind("q.", 0) == 0) qhead += shape_product(shape);
    if (name.rfind("baseline", 0) == 0) baseline += shape_product(shape);
  }
  CHECK(lstm == 4 * (256 * 256 + 256 + 256 * 256 + 256));  // 526,336
  CHECK(qhead == 256 * 18 + 18);                           // 4,626
  CHECK(baseline == 257);
}

TEST_CASE("hard minus soft is 257 for any hidden=256 geometry") {
  for (int actions : {2, 3, 4, 18}) {
    const Geometry g = make_geometry(Profile::Paper, actions);
    CHECK(count_params(Arch::DarqnHard, g) - count_params(Arch::DarqnSoft, g) == 257);
  }
}

TEST_CASE("encode: paper geometry yields 49 vectors of dimension 256") {
  const Geometry g = make_geometry(Profile::Paper, 18);
  Network net(Arch::DarqnSoft, g);
  ParameterSet ps;
  Rng rng(1);
  init_params(ps, Arch::DarqnSoft, g, rng);
  Tape t(false);
  Rng frng(2);
  Value grid = net.encode(t, ps, t.constant(random_tensor({84, 84}, frng, 0.0, 1.0)));
  CHECK(t.value(grid).shape() == std::vector<int>{49, 256});
}

TEST_CASE("encode: zero frame with zero biases gives an all-zero grid") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet ps;
  Rng rng(3);
  init_params(ps, Arch::DarqnSoft, g, rng);
  ps.at("conv1.b").value.fill(0.0);
  ps.at("conv2.b").value.fill(0.0);
  Tape t(false);
  Value grid = net.encode(t, ps, t.constant(Tensor({24, 24})));
  for (int64_t i = 0; i < t.value(grid).size(); ++i) CHECK(t.value(grid)[i] == 0.0);
  CHECK(t.value(grid).shape() == std::vector<int>{25, 16});
}

TEST_CASE("encode: location-major layout, vector i holds all channels of cell i") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet ps;
  Rng rng(5);
  init_params(ps, Arch::DarqnSoft, g, rng);
  Rng frng(6);
  const Tensor frame = random_tensor({24, 24}, frng, 0.0, 1.0);
  Tape t(false);
  Value conv = t.constant(Tensor({24, 24}));  // placeholder to keep indices aligned
  (void)conv;
  Value grid = net.encode(t, ps, t.constant(frame));
  // recompute the conv stack by hand through the tape and compare cells
  Tape t2(false);
  Value x = t2.reshape(t2.constant(frame), {1, 24, 24});
  x = t2.relu(t2.conv2d(x, t2.param(ps.at("conv1.w")), t2.param(ps.at("conv1.b")), 2));
  x = t2.relu(t2.conv2d(x, t2.param(ps.at("conv2.w")), t2.param(ps.at("conv2.b")), 2));
  const Tensor& chw = t2.value(x);
  for (int c = 0; c < 16; ++c)
    for (int cell = 0; cell < 25; ++cell)
      CHECK(t.value(grid)[static_cast<int64_t>(cell) * 16 + c] == chw[static_cast<int64_t>(c) * 25 + cell]);
}

TEST_CASE("attention: identical location vectors give uniform weights") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet ps;
  Rng rng(7);
  init_params(ps, Arch::DarqnSoft, g, rng);
  Tape t;
  Tensor grid({g.locations, g.feature_dim});
  Rng vr(8);
  Tensor one_row = random_tensor({g.feature_dim}, vr);
  for (int l = 0; l < g.locations; ++l)
    for (int d = 0; d < g.feature_dim; ++d) grid[static_cast<int64_t>(l) * g.feature_dim + d] = one_row[d];
  Value w = t.softmax(net.attention_scores(t, ps, t.constant(grid), t.constant(random_tensor({g.hidden}, vr))));
  for (int l = 0; l < g.locations; ++l)
    CHECK(std::fabs(t.value(w)[l] - 1.0 / g.locations) <= 1e-10);
}

TEST_CASE("attention: weights sum to one and are permutation-equivariant") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet ps;
  Rng rng(9);
  init_params(ps, Arch::DarqnSoft, g, rng);
  Rng vr(10);
  for (int rep = 0; rep < 20; ++rep) {
    const Tensor grid = random_tensor({g.locations, g.feature_dim}, vr);
    const Tensor h = random_tensor({g.hidden}, vr);
    Tape t;
    Value w = t.softmax(net.attention_scores(t, ps, t.constant(grid), t.constant(h)));
    double sum = 0.0;
    for (int l = 0; l < g.locations; ++l) sum += t.value(w)[l];
    CHECK(std::fabs(sum - 1.0) <= 1e-12);

    // reverse the rows: weights must reverse identically
    Tensor rev({g.locations, g.feature_dim});
    for (int l = 0; l < g.locations; ++l)
      for (int d = 0; d < g.feature_dim; ++d)
        rev[static_cast<int64_t>(l) * g.feature_dim + d] =
            grid[static_cast<int64_t>(g.locations - 1 - l) * g.feature_dim + d];
    Tape t2;
    Value w2 = t2.softmax(net.attention_scores(t2, ps, t2.constant(rev), t2.constant(h)));
    for (int l = 0; l < g.locations; ++l)
      CHECK(std::fabs(t2.value(w2)[l] - t.value(w)[g.locations - 1 - l]) <= 1e-12);
  }
}

TEST_CASE("attention: two-location toy case against a hand computation") {
  // D=2, H=2 via a custom tiny geometry exercised through raw ops
  ParameterSet ps;
  ps.add("att.a1_w", {2, 2}).value = Tensor({2, 2}, {0.3, -0.1, 0.2, 0.5});
  ps.add("att.a1_b", {2}).value = Tensor({2}, {0.05, -0.02});
  ps.add("att.w_h", {2, 2}).value = Tensor({2, 2}, {0.4, 0.1, -0.3, 0.2});
  ps.add("att.a2_w", {1, 2}).value = Tensor({1, 2}, {0.7, -0.6});
  ps.add("att.a2_b", {1}).value = Tensor({1}, {0.01});
  const double v[2][2] = {{0.9, -0.4}, {-0.2, 0.8}};
  const double h[2] = {0.3, -0.7};

  double scores[2];
  for (int l = 0; l < 2; ++l) {
    double pre[2];
    for (int i = 0; i < 2; ++i) {
      pre[i] = ps.at("att.a1_b").value[i];
      for (int j = 0; j < 2; ++j) pre[i] += ps.at("att.a1_w").value[i * 2 + j] * v[l][j];
      for (int j = 0; j < 2; ++j) pre[i] += ps.at("att.w_h").value[i * 2 + j] * h[j];
    }
    scores[l] = ps.at("att.a2_b").value[0];
    for (int i = 0; i < 2; ++i) scores[l] += ps.at("att.a2_w").value[i] * std::tanh(pre[i]);
  }
  const double m = std::max(scores[0], scores[1]);
  const double e0 = std::exp(scores[0] - m), e1 = std::exp(scores[1] - m);
  const double expect0 = e0 / (e0 + e1);

  Geometry g;
  g.input_h = g.input_w = 4;
  g.conv = {{2, 3, 1}};
  g.feature_dim = 2;
  g.grid_side = 2;  // unused here beyond L
  g.locations = 2;
  g.hidden = 2;
  g.actions = 2;
  Network net(Arch::DarqnSoft, g);
  Tape t;
  Tensor grid({2, 2}, {v[0][0], v[0][1], v[1][0], v[1][1]});
  Value w = t.softmax(net.attention_scores(t, ps, t.constant(grid), t.constant(Tensor({2}, {h[0], h[1]}))));
  CHECK(std::fabs(t.value(w)[0] - expect0) <= 1e-12);
  CHECK(std::fabs(t.value(w)[1] - (1.0 - expect0)) <= 1e-12);
}

TEST_CASE("soft context: one-hot picks a row, uniform averages, random matches a loop") {
  Rng rng(12);
  const int L = 6, D = 4;
  const Tensor grid = random_tensor({L, D}, rng);
  Tape t;
  Value gv = t.constant(grid);

  Tensor onehot({L});
  onehot[3] = 1.0;
  Value z1 = t.weighted_row_sum(gv, t.constant(onehot));
  for (int d = 0; d < D; ++d) CHECK(t.value(z1)[d] == doctest::Approx(grid[3 * D + d]).epsilon(1e-15));

  Value z2 = t.weighted_row_sum(gv, t.constant(Tensor({L}, 1.0 / L)));
  for (int d = 0; d < D; ++d) {
    double mean = 0.0;
    for (int l = 0; l < L; ++l) mean += grid[l * D + d] / L;
    CHECK(std::fabs(t.value(z2)[d] - mean) <= 1e-12);
  }

  const Tensor w = random_tensor({L}, rng, 0.0, 1.0);
  Value z3 = t.weighted_row_sum(gv, t.constant(w));
  for (int d = 0; d < D; ++d) {
    double acc = 0.0;
    for (int l = 0; l < L; ++l) acc += w[l] * grid[l * D + d];
    CHECK(std::fabs(t.value(z3)[d] - acc) <= 1e-12);
  }
}

TEST_CASE("soft context convexity: each coordinate within the per-coordinate min/max") {
  Rng rng(13);
  const int L = 9, D = 5;
  for (int rep = 0; rep < 200; ++rep) {
    const Tensor grid = random_tensor({L, D}, rng, -3.0, 3.0);
    Tape t;
    Value w = t.softmax(t.constant(random_tensor({L}, rng, -2.0, 2.0)));
    Value z = t.weighted_row_sum(t.constant(grid), w);
    for (int d = 0; d < D; ++d) {
      double lo = grid[d], hi = grid[d];
      for (int l = 1; l < L; ++l) {
        lo = std::min(lo, grid[l * D + d]);
        hi = std::max(hi, grid[l * D + d]);
      }
      CHECK(t.value(z)[d] >= lo - 1e-12);
      CHECK(t.value(z)[d] <= hi + 1e-12);
    }
  }
}

TEST_CASE("hard attention: one-hot weights always select that row; mixing at 0.5") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnHard, g);
  ParameterSet ps;
  Rng rng(14);
  init_params(ps, Arch::DarqnHard, g, rng);

  // force a decisive distribution by biasing the outer linear
  Rng sample_rng(15);
  Rng frng(16);
  int sampled_seen = 0, mixed_seen = 0;
  const int steps = 10000;
  for (int i = 0; i < steps; ++i) {
    Tape t(false);
    RecurrentState st = net.begin_sequence(t);
    ForwardOptions opt;
    opt.rng = &sample_rng;
    opt.mix_prob = 0.5;
    const StepOutput out = net.step(t, ps, t.constant(random_tensor({24, 24}, frng, 0.0, 1.0)), st, opt);
    if (out.att.sampled >= 0) sampled_seen += 1;
    if (out.att.mixed) mixed_seen += 1;
  }
  CHECK(sampled_seen + mixed_seen == steps);
  CHECK(std::fabs(mixed_seen / double(steps) - 0.5) <= 0.01);
}

TEST_CASE("hard attention: force_soft matches the soft context exactly") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network hard(Arch::DarqnHard, g);
  ParameterSet ps;
  Rng rng(17);
  init_params(ps, Arch::DarqnHard, g, rng);
  Rng frng(18);
  const Tensor frame = random_tensor({24, 24}, frng, 0.0, 1.0);

  Tape t1(false);
  RecurrentState s1 = hard.begin_sequence(t1);
  ForwardOptions o1;
  o1.force_soft = true;
  const StepOutput a = hard.step(t1, ps, t1.constant(frame), s1, o1);

  // the same parameters run through the soft code path
  Network soft(Arch::DarqnSoft, g);
  Tape t2(false);
  RecurrentState s2 = soft.begin_sequence(t2);
  ForwardOptions o2;
  const StepOutput b = soft.step(t2, ps, t2.constant(frame), s2, o2);
  CHECK(t1.value(a.q).vec() == t2.value(b.q).vec());
}

TEST_CASE("q_step: chained steps differ from independent steps when h carries information") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet ps;
  Rng rng(19);
  init_params(ps, Arch::DarqnSoft, g, rng);
  Rng frng(20);
  const Tensor f1 = random_tensor({24, 24}, frng, 0.0, 1.0);
  const Tensor f2 = random_tensor({24, 24}, frng, 0.0, 1.0);

  Tape t(false);
  RecurrentState chained = net.begin_sequence(t);
  ForwardOptions opt;
  net.step(t, ps, t.constant(f1), chained, opt);
  const StepOutput second_chained = net.step(t, ps, t.constant(f2), chained, opt);

  RecurrentState fresh = net.begin_sequence(t);
  const StepOutput second_fresh = net.step(t, ps, t.constant(f2), fresh, opt);

  double diff = 0.0;
  for (int a = 0; a < g.actions; ++a)
    diff += std::fabs(t.value(second_chained.q)[a] - t.value(second_fresh.q)[a]);
  CHECK(diff > 1e-8);
}

TEST_CASE("q head: zero parameters give zero q-values") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network net(Arch::DarqnSoft, g);
  ParameterSet ps;
  Rng rng(21);
  init_params(ps, Arch::DarqnSoft, g, rng);
  ps.at("q.w").value.fill(0.0);
  ps.at("q.b").value.fill(0.0);
  Tape t(false);
  RecurrentState st = net.begin_sequence(t);
  ForwardOptions opt;
  Rng frng(22);
  const StepOutput out = net.step(t, ps, t.constant(random_tensor({24, 24}, frng, 0.0, 1.0)), st, opt);
  for (int a = 0; a < g.actions; ++a) CHECK(t.value(out.q)[a] == 0.0);
}

TEST_CASE("baseline: zero params give zero, linear in h, soft arch rejects it") {
  const Geometry g = make_geometry(Profile::Small, 3);
  Network hard(Arch::DarqnHard, g);
  ParameterSet ps;
  Rng rng(23);
  init_params(ps, Arch::DarqnHard, g, rng);

  Rng hr(24);
  const Tensor h = random_tensor({g.hidden}, hr);
  ps.at("baseline.b").value.fill(0.0);
  {
    Tape t;
    Value g1 = hard.baseline(t, ps, t.constant(h));
    Tensor h2 = h;
    for (int64_t i = 0; i < h2.size(); ++i) h2[i] *= 2.0;
    Value g2 = hard.baseline(t, ps, t.constant(h2));
    CHECK(std::fabs(t.value(g2)[0] - 2.0 * t.value(g1)[0]) <= 1e-12);
  }
  ps.at("baseline.w").value.fill(0.0);
  {
    Tape t;
    Value g0 = hard.baseline(t, ps, t.constant(h));
    CHECK(t.value(g0)[0] == 0.0);
    Network soft(Arch::DarqnSoft, g);
    CHECK_THROWS_AS(soft.baseline(t, ps, t.constant(h)), std::logic_error);
  }
}

TEST_CASE("forward pass is pure: repeated invocation is bit-identical") {
  const Geometry g = make_geometry(Profile::Small, 3);
  for (Arch arch : {Arch::Dqn, Arch::Drqn, Arch::DarqnSoft, Arch::DarqnHard}) {
    Network net(arch, g);
    ParameterSet ps;
    Rng rng(25);
    init_params(ps, arch, g, rng);
    Rng frng(26);
    const Tensor frame = random_tensor({24, 24}, frng, 0.0, 1.0);
    auto run = [&]() {
      Tape t(false);
      RecurrentState st = net.begin_sequence(t);
      ForwardOptions opt;
      Rng r(27);
      opt.rng = arch == Arch::DarqnHard ? &r : nullptr;
      return t.value(net.step(t, ps, t.constant(frame), st, opt).q).vec();
    };
    CHECK(run() == run());
  }
}

TEST_CASE("select_action: greedy, uniform, tie-breaking, shift invariance") {
  Rng rng(28);
  Tensor q({4}, {0.1, 0.9, 0.9, -2.0});
  for (int i = 0; i < 50; ++i) CHECK(select_action(q, 0.0, rng) == 1);  // lowest-index tie break

  Tensor shifted = q;
  for (int64_t i = 0; i < q.size(); ++i) shifted[i] += 1234.5;
  CHECK(select_action(shifted, 0.0, rng) == 1);

  int counts[4] = {0, 0, 0, 0};
  const int n = 1000000;
  Rng rng2(29);
  for (int i = 0; i < n; ++i) counts[select_action(q, 1.0, rng2)] += 1;
  for (int k = 0; k < 4; ++k) CHECK(std::fabs(counts[k] / double(n) - 0.25) <= 0.01);

  CHECK_THROWS_AS(select_action(Tensor(), 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(select_action(q, 1.5, rng), std::invalid_argument);
}

TEST_CASE("gradient check: every architecture on the small profile") {
  // synthetic squared-error loss over a short unroll with fixed targets;
  // the seeds keep every relu pre-activation clear of the finite-difference
  // window so the central-difference oracle stays valid
  const Geometry g = make_geometry(Profile::Small, 3);
  Rng frng(32);
  std::vector<Tensor> frames;
  for (int i = 0; i < 2; ++i) frames.push_back(random_tensor({24, 24}, frng, 0.05, 1.0));
  const std::vector<int> actions = {1, 2};
  const std::vector<double> targets = {0.4, -0.3};

  for (Arch arch : {Arch::Dqn, Arch::Drqn, Arch::DarqnSoft}) {
    CAPTURE(arch_to_string(arch));
    ParameterSet ps;
    Rng rng(33);
    init_params(ps, arch, g, rng);
    Network net(arch, g);
    auto loss = [&](Tape& t, ParameterSet& p) {
      RecurrentState st = net.begin_sequence(t);
      ForwardOptions opt;
      Value acc{};
      for (size_t i = 0; i < frames.size(); ++i) {
        const StepOutput out = net.step(t, p, t.constant(frames[i]), st, opt);
        Value d = t.sub(t.pick(out.q, actions[i]), t.constant(Tensor::scalar(targets[i])));
        Value term = t.square(d);
        acc = acc.ok() ? t.add(acc, term) : term;
      }
      return acc;
    };
    FdFailure fail;
    const bool ok = check_gradients_fd(ps, loss, 1e-4, 1e-5, &fail);
    if (!ok)
      MESSAGE("fd mismatch [", arch_to_string(arch), "] at ", fail.param, "[", fail.index,
              "] analytic=", fail.analytic, " numeric=", fail.numeric, " rel=", fail.rel);
    CHECK(ok);
  }
}
