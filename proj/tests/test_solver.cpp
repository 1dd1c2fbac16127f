#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dcc/solver.hpp"
#include "helpers.hpp"

using namespace dcc;
using testutil::Instance;

TEST_CASE("orthant index encoding is lexicographic with -1 before +1") {
  CHECK(orthant_vector(0, 2) == std::vector<int>{-1, -1});
  CHECK(orthant_vector(1, 2) == std::vector<int>{-1, 1});
  CHECK(orthant_vector(2, 2) == std::vector<int>{1, -1});
  CHECK(orthant_vector(3, 2) == std::vector<int>{1, 1});
  CHECK(num_orthants(3) == 8);
}

TEST_CASE("flat oracle equals an independent recursive robust recursion") {
  Rng rng(88ULL);
  for (int trial = 0; trial < 10; ++trial) {
    Instance ins = testutil::random_instance(rng);
    int h = 2;
    XSpace xs(ins.cfg.M);
    if (xs.count > 9) continue;  // keep recursion tiny
    QosTable qos = build_qos_table(xs, ins.model.lambda_support, ins.cfg, 1);
    SolveOptions opts;
    opts.jobs = 1;
    FlatResult flat = flat_backward_induction(ins.model, ins.cfg, h, 0.95, qos, opts);
    testutil::RecursiveOracle oracle(ins.model, ins.cfg, h, 0.95, qos);
    for (long long xi = 0; xi < xs.count; ++xi)
      for (std::size_t li = 0; li < ins.model.support_size(); ++li)
        for (int th = 0; th < ins.model.num_modes; ++th)
          CHECK(flat.values.v[0][flat.values.cell(xi, li, th)] ==
                doctest::Approx(oracle.value(0, xi, li, th)).epsilon(1e-12));
  }
}

TEST_CASE("threshold recursion matches the flat oracle on convex instances") {
  Rng rng(89ULL);
  int convex = 0, generated = 0;
  while (convex < 25 && generated < 300) {
    ++generated;
    Instance ins = testutil::random_instance(rng);
    int h = 1 + static_cast<int>(rng.next_below(4));
    XSpace xs(ins.cfg.M);
    QosTable qos = build_qos_table(xs, ins.model.lambda_support, ins.cfg, 1);
    if (!qos_table_axis_convex(qos)) continue;
    ++convex;
    SolveOptions opts;
    opts.jobs = 1;
    SolveResult thr = backward_induction(ins.model, ins.cfg, h, 0.95, qos, opts);
    FlatResult flat = flat_backward_induction(ins.model, ins.cfg, h, 0.95, qos, opts);
    for (int t = 0; t < h; ++t)
      for (std::size_t c = 0; c < flat.values.v[t].size(); ++c)
        CHECK(std::abs(thr.values.v[t][c] - flat.values.v[t][c]) <= 1e-9);
  }
  CHECK(convex >= 25);
}

TEST_CASE("apply_threshold_rule moves to the matching threshold or stays") {
  ThresholdPolicy policy;
  policy.B = 1;
  policy.num_modes = 1;
  policy.is_stationary = true;
  // k = -1 threshold 1 (switch off down to 1), k = +1 threshold 2 (switch on up to 2)
  policy.entries = {{{ThresholdEntry{{1}, 0.0}, ThresholdEntry{{2}, 0.0}}}};
  CHECK(apply_threshold_rule({3}, 0, 0, policy) == OnCounts{1});  // above tau^-1 -> down
  CHECK(apply_threshold_rule({0}, 0, 0, policy) == OnCounts{2});  // below tau^+1 -> up
  CHECK(apply_threshold_rule({1}, 0, 0, policy) == OnCounts{1});  // boundary matches k = -1
}

TEST_CASE("threshold entries do not depend on x or lambda by construction") {
  // compute_thresholds output is per (t, theta, k): solving twice with
  // different lambda supports that share the same continuation gives the
  // same tau when gamma = 0 (no continuation at all)
  Rng rng(90ULL);
  Instance ins = testutil::random_instance(rng);
  XSpace xs(ins.cfg.M);
  QosTable qos = build_qos_table(xs, ins.model.lambda_support, ins.cfg, 1);
  SolveOptions opts;
  opts.jobs = 1;
  SolveResult a = backward_induction(ins.model, ins.cfg, 3, 0.0, qos, opts);
  Instance other = ins;
  other.model.emission.assign(ins.model.num_modes,
                              std::vector<double>(ins.model.support_size(), 1.0 / ins.model.support_size()));
  SolveResult b = backward_induction(other.model, other.cfg, 3, 0.0, qos, opts);
  for (int t = 0; t < 3; ++t)
    for (int th = 0; th < ins.model.num_modes; ++th)
      for (int ki = 0; ki < num_orthants(ins.cfg.B); ++ki)
        CHECK(a.policy.entries[t][th][ki].tau == b.policy.entries[t][th][ki].tau);
}

TEST_CASE("zero-width uncertainty reproduces nominal values bit for bit") {
  Rng rng(91ULL);
  Instance ins = testutil::random_instance(rng);
  XSpace xs(ins.cfg.M);
  QosTable qos = build_qos_table(xs, ins.model.lambda_support, ins.cfg, 1);
  SolveOptions opts;
  opts.jobs = 1;
  ModeModel singleton = ins.model.with_singleton_chain();
  FlatResult once = flat_backward_induction(singleton, ins.cfg, 4, 0.95, qos, opts);
  FlatResult twice = flat_backward_induction(singleton, ins.cfg, 4, 0.95, qos, opts);
  for (int t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < once.values.v[t].size(); ++c) CHECK(once.values.v[t][c] == twice.values.v[t][c]);
}

TEST_CASE("widening the uncertainty never decreases values") {
  Rng rng(92ULL);
  for (int trial = 0; trial < 10; ++trial) {
    Instance ins = testutil::random_instance(rng);
    XSpace xs(ins.cfg.M);
    QosTable qos = build_qos_table(xs, ins.model.lambda_support, ins.cfg, 1);
    SolveOptions opts;
    opts.jobs = 1;
    FlatResult base = flat_backward_induction(ins.model, ins.cfg, 4, 0.95, qos, opts);
    FlatResult wide = flat_backward_induction(ins.model.widened_chain(0.1), ins.cfg, 4, 0.95, qos, opts);
    for (int t = 0; t < 4; ++t)
      for (std::size_t c = 0; c < base.values.v[t].size(); ++c)
        CHECK(wide.values.v[t][c] >= base.values.v[t][c] - 1e-12);
  }
}

TEST_CASE("solver output is invariant to the worker count") {
  Rng rng(93ULL);
  Instance ins = testutil::random_instance(rng);
  XSpace xs(ins.cfg.M);
  QosTable qos = build_qos_table(xs, ins.model.lambda_support, ins.cfg, 1);
  SolveOptions one;
  one.jobs = 1;
  SolveOptions four;
  four.jobs = 4;
  SolveResult a = backward_induction(ins.model, ins.cfg, 4, 0.95, qos, one);
  SolveResult b = backward_induction(ins.model, ins.cfg, 4, 0.95, qos, four);
  for (int t = 0; t < 4; ++t) {
    for (std::size_t c = 0; c < a.values.v[t].size(); ++c) CHECK(a.values.v[t][c] == b.values.v[t][c]);
    for (int th = 0; th < ins.model.num_modes; ++th)
      for (int ki = 0; ki < num_orthants(ins.cfg.B); ++ki)
        CHECK(a.policy.entries[t][th][ki].tau == b.policy.entries[t][th][ki].tau);
  }
}

TEST_CASE("keep_values = false retains only slot zero, identically") {
  Rng rng(94ULL);
  Instance ins = testutil::random_instance(rng);
  XSpace xs(ins.cfg.M);
  QosTable qos = build_qos_table(xs, ins.model.lambda_support, ins.cfg, 1);
  SolveOptions full;
  full.jobs = 1;
  SolveOptions lean = full;
  lean.keep_values = false;
  SolveResult a = backward_induction(ins.model, ins.cfg, 4, 0.95, qos, full);
  SolveResult b = backward_induction(ins.model, ins.cfg, 4, 0.95, qos, lean);
  REQUIRE(b.values.v.size() == 1);
  for (std::size_t c = 0; c < a.values.v[0].size(); ++c) CHECK(a.values.v[0][c] == b.values.v[0][c]);
  CHECK_THROWS_AS(b.values.at(1, 0, 0, 0), std::domain_error);
}

TEST_CASE("infinite horizon fixed point satisfies its own backup") {
  Rng rng(95ULL);
  Instance ins = testutil::random_instance(rng);
  XSpace xs(ins.cfg.M);
  QosTable qos = build_qos_table(xs, ins.model.lambda_support, ins.cfg, 1);
  SolveOptions opts;
  opts.jobs = 1;
  InfiniteResult res = infinite_horizon_solve(ins.model, ins.cfg, 0.9, 1e-12, qos, opts);
  CHECK(res.sup_changes.back() <= 1e-12);
  // changes contract roughly geometrically
  CHECK(res.sup_changes.back() < res.sup_changes.front());

  // the induced stationary policy evaluates to the same values
  std::vector<double> eval = robust_policy_eval(res.policy, ins.model, ins.cfg, 0.9, 1e-13, qos);
  for (std::size_t c = 0; c < eval.size(); ++c) CHECK(eval[c] == doctest::Approx(res.values[c]).epsilon(1e-8));
}

TEST_CASE("infinite horizon rejects bad inputs") {
  Rng rng(96ULL);
  Instance ins = testutil::random_instance(rng);
  XSpace xs(ins.cfg.M);
  QosTable qos = build_qos_table(xs, ins.model.lambda_support, ins.cfg, 1);
  CHECK_THROWS_AS(infinite_horizon_solve(ins.model, ins.cfg, 1.0, 1e-9, qos), std::domain_error);
  CHECK_THROWS_AS(infinite_horizon_solve(ins.model, ins.cfg, 0.9, 0.0, qos), std::domain_error);
  Instance tv = testutil::random_instance(rng, false);
  while (!tv.cfg.price.time_varying()) tv = testutil::random_instance(rng, false);
  XSpace xs2(tv.cfg.M);
  QosTable qos2 = build_qos_table(xs2, tv.model.lambda_support, tv.cfg, 1);
  CHECK_THROWS_AS(infinite_horizon_solve(tv.model, tv.cfg, 0.9, 1e-9, qos2), std::domain_error);
}

TEST_CASE("monte carlo estimate: zero-cost instance gives exactly zero") {
  DataCenterConfig cfg;
  cfg.B = 1;
  cfg.J = 1;
  cfg.I = 1;
  cfg.M = {1};
  cfg.r = {5.0};
  cfg.block_type = {0};
  cfg.C = {0.0};
  cfg.serve_mask_ = {1};
  cfg.price = PriceSchedule::uniform(1, 1, 0.0, 0.0, 0.0);
  ModeModel model;
  model.num_modes = 1;
  model.lambda_support = {{0.0}};  // every on-count is feasible, all costs zero
  model.emission = {{1.0}};
  model.chain = {{IntervalSet::singleton({1.0})}};
  XSpace xs(cfg.M);
  QosTable qos = build_qos_table(xs, model.lambda_support, cfg, 1);

  ThresholdPolicy policy;
  policy.B = 1;
  policy.num_modes = 1;
  policy.is_stationary = true;
  policy.entries = {{{ThresholdEntry{{1}, 0.0}, ThresholdEntry{{1}, 0.0}}}};
  Rng rng(1ULL);
  ValueEstimate est = estimate_policy_value(policy, model, cfg, 0.9, 200, 50, rng, qos);
  CHECK(est.mean == 0.0);
  CHECK(est.std_error == 0.0);
}

TEST_CASE("monte carlo estimate is within 3 standard errors of exact evaluation") {
  Rng rng(97ULL);
  Instance ins = testutil::random_instance(rng);
  XSpace xs(ins.cfg.M);
  QosTable qos = build_qos_table(xs, ins.model.lambda_support, ins.cfg, 1);
  SolveOptions opts;
  opts.jobs = 1;
  ModeModel nominal = ins.model.with_singleton_chain();
  InfiniteResult solved = infinite_horizon_solve(nominal, ins.cfg, 0.9, 1e-12, qos, opts);
  // exact value of the policy under nominal dynamics, uniform start states
  std::vector<double> exact = robust_policy_eval(solved.policy, nominal, ins.cfg, 0.9, 1e-13, qos);
  double exact_mean = 0.0;
  for (double v : exact) exact_mean += v;
  exact_mean /= exact.size();

  Rng mc_rng(2026ULL);
  ValueEstimate est = estimate_policy_value(solved.policy, nominal, ins.cfg, 0.9, 4000, 400, mc_rng, qos);
  CHECK(std::abs(est.nominal_mean - exact_mean) <= 3.0 * est.nominal_std_error + 1e-6);
}

TEST_CASE("g + h decomposition reproduces the stage-plus-continuation value") {
  Rng rng(98ULL);
  Instance ins = testutil::random_instance(rng);
  int h = 2;
  XSpace xs(ins.cfg.M);
  QosTable qos = build_qos_table(xs, ins.model.lambda_support, ins.cfg, 1);
  SolveOptions opts;
  opts.jobs = 1;
  FlatResult flat = flat_backward_induction(ins.model, ins.cfg, h, 0.95, qos, opts);
  for (int sample = 0; sample < 40; ++sample) {
    long long xi = static_cast<long long>(rng.next_below(xs.count));
    long long ai = static_cast<long long>(rng.next_below(xs.count));
    std::size_t li = rng.next_below(ins.model.support_size());
    int th = static_cast<int>(rng.next_below(ins.model.num_modes));
    OnCounts x = xs.decode(xi);
    OnCounts a = xs.decode(ai);
    // continuation under the flat slot-1 values
    std::vector<double> w(ins.model.num_modes, 0.0);
    for (int th2 = 0; th2 < ins.model.num_modes; ++th2)
      for (std::size_t l2 = 0; l2 < ins.model.support_size(); ++l2)
        w[th2] += ins.model.emission[th2][l2] * flat.values.v[1][flat.values.cell(ai, l2, th2)];
    double cont = 0.95 * worst_case_expectation(w, ins.model.chain_at(0, th)).expectation;
    double f = qos.at(xi, li) + energy_idle_cost(0, x, ins.cfg) + switching_cost(0, x, a, ins.cfg) + cont;

    // the matching orthant's g + h equals f; all others are dominated
    double best = -1e300;
    for (int ki = 0; ki < num_orthants(ins.cfg.B); ++ki) {
      std::vector<int> k = orthant_vector(ki, ins.cfg.B);
      double gh = g_term(0, k, xi, li, qos, ins.cfg) +
                  h_term(0, k, a, th, flat.values.v[1], flat.values, ins.model, ins.cfg, 0.95);
      CHECK(gh <= f + 1e-9);
      best = std::max(best, gh);
    }
    CHECK(best == doctest::Approx(f).epsilon(1e-10));
  }
}
