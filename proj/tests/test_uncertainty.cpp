#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dcc/uncertainty.hpp"
#include "helpers.hpp"

using namespace dcc;

TEST_CASE("interval validation") {
  IntervalSet set;
  set.nominal = {0.5, 0.5};
  set.lo = {0.4, 0.4};
  set.hi = {0.6, 0.6};
  CHECK_NOTHROW(set.validate());

  IntervalSet bad = set;
  bad.lo = {0.6, 0.6};  // lo > nominal
  CHECK_THROWS_AS(bad.validate(), std::domain_error);

  bad = set;
  bad.hi = {0.45, 0.45};  // nominal > hi and sum(hi) < 1
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
}

TEST_CASE("interval greedy puts slack on the largest values first") {
  IntervalSet set;
  set.nominal = {0.3, 0.3, 0.4};
  set.lo = {0.1, 0.2, 0.3};
  set.hi = {0.6, 0.5, 0.6};
  std::vector<double> values = {10.0, 1.0, 5.0};
  WorstCase wc = worst_case_expectation_interval(values, set);
  // mass 0.4 above the floor: 0.5 goes... cap at hi: p0 = min(0.1+0.4, 0.6)
  CHECK(wc.row[0] == doctest::Approx(0.5));
  CHECK(wc.row[1] == doctest::Approx(0.2));
  CHECK(wc.row[2] == doctest::Approx(0.3));
  CHECK(wc.expectation == doctest::Approx(0.5 * 10 + 0.2 * 1 + 0.3 * 5));
}

TEST_CASE("interval greedy matches vertex enumeration on random rows") {
  Rng rng(2024ULL);
  for (int trial = 0; trial < 500; ++trial) {
    int n = 2 + static_cast<int>(rng.next_below(3));
    IntervalSet set = testutil::random_interval_row(rng, n);
    std::vector<double> values(n);
    for (int i = 0; i < n; ++i) values[i] = 20.0 * rng.next_double() - 10.0;
    WorstCase wc = worst_case_expectation_interval(values, set);
    CHECK(wc.expectation == doctest::Approx(testutil::interval_lp_oracle(values, set)).epsilon(1e-12));
    double s = 0.0;
    for (std::size_t i = 0; i < wc.row.size(); ++i) {
      CHECK(wc.row[i] >= set.lo[i] - 1e-12);
      CHECK(wc.row[i] <= set.hi[i] + 1e-12);
      s += wc.row[i];
    }
    CHECK(s == doctest::Approx(1.0));
  }
}

TEST_CASE("singleton interval returns the nominal expectation") {
  std::vector<double> nominal = {0.25, 0.5, 0.25};
  IntervalSet set = IntervalSet::singleton(nominal);
  std::vector<double> values = {3.0, -1.0, 7.0};
  WorstCase wc = worst_case_expectation_interval(values, set);
  double expect = 0.25 * 3.0 + 0.5 * -1.0 + 0.25 * 7.0;
  CHECK(wc.expectation == expect);  // exact
  CHECK(wc.row == nominal);
}

TEST_CASE("kl radius zero returns the nominal expectation") {
  LikelihoodSet set;
  set.nominal = {0.3, 0.7};
  set.radius = 0.0;
  std::vector<double> values = {5.0, 1.0};
  WorstCase wc = worst_case_expectation_kl(values, set);
  CHECK(wc.expectation == doctest::Approx(0.3 * 5 + 0.7 * 1));
  CHECK(wc.row == set.nominal);
}

TEST_CASE("kl bisection matches dense grid search on two outcomes") {
  Rng rng(717ULL);
  for (int trial = 0; trial < 100; ++trial) {
    LikelihoodSet set;
    double q = 0.05 + 0.9 * rng.next_double();
    set.nominal = {q, 1.0 - q};
    set.radius = 0.6 * rng.next_double();
    std::vector<double> values = {20.0 * rng.next_double() - 10.0, 20.0 * rng.next_double() - 10.0};
    double got = worst_case_expectation_kl(values, set).expectation;
    double best = -1e300;
    for (double p = 0.0; p <= 1.0 + 1e-12; p += 1e-5) {
      std::vector<double> row = {p, 1.0 - p};
      if (detail::kl_divergence(row, set.nominal) > set.radius) continue;
      best = std::max(best, p * values[0] + (1.0 - p) * values[1]);
    }
    // grid resolution 1e-5 bounds how close "best" itself can be
    CHECK(std::abs(got - best) <= 5e-4);
  }
}

TEST_CASE("kl worst case stays inside the ball and dominates the nominal") {
  Rng rng(718ULL);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + static_cast<int>(rng.next_below(4));
    LikelihoodSet set;
    std::vector<double> q(n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      q[i] = 0.05 + rng.next_double();
      s += q[i];
    }
    for (double& v : q) v /= s;
    set.nominal = q;
    set.radius = rng.next_double();
    std::vector<double> values(n);
    for (int i = 0; i < n; ++i) values[i] = 10.0 * rng.next_double();
    WorstCase wc = worst_case_expectation_kl(values, set);
    CHECK(detail::kl_divergence(wc.row, q) <= set.radius + 1e-6);
    double nominal_e = 0.0, row_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      nominal_e += q[i] * values[i];
      row_sum += wc.row[i];
    }
    CHECK(wc.expectation >= nominal_e - 1e-12);
    CHECK(row_sum == doctest::Approx(1.0));
  }
}

TEST_CASE("large kl radius concentrates on the best supported outcome") {
  LikelihoodSet set;
  set.nominal = {0.5, 0.3, 0.2};
  set.radius = 100.0;
  std::vector<double> values = {1.0, 9.0, 2.0};
  WorstCase wc = worst_case_expectation_kl(values, set);
  CHECK(wc.expectation == doctest::Approx(9.0));
  CHECK(wc.row[1] == doctest::Approx(1.0));
}

TEST_CASE("kl ignores outcomes outside the nominal support") {
  LikelihoodSet set;
  set.nominal = {0.0, 0.6, 0.4};
  set.radius = 10.0;
  std::vector<double> values = {100.0, 2.0, 1.0};
  WorstCase wc = worst_case_expectation_kl(values, set);
  CHECK(wc.row[0] == 0.0);  // absolutely continuous w.r.t. nominal
  CHECK(wc.expectation == doctest::Approx(2.0));
}

TEST_CASE("widening is monotone for both set kinds") {
  Rng rng(719ULL);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 3;
    std::vector<double> values(n);
    for (int i = 0; i < n; ++i) values[i] = 10.0 * rng.next_double() - 5.0;

    IntervalSet iset = testutil::random_interval_row(rng, n, 0.05);
    double base = worst_case_expectation_interval(values, iset).expectation;
    double prev = base;
    for (double delta : {0.05, 0.1, 0.2}) {
      double w = worst_case_expectation_interval(values, iset.widened(delta)).expectation;
      CHECK(w >= prev - 1e-12);
      prev = w;
    }

    LikelihoodSet kset;
    kset.nominal = nominal_row(UncertaintySet(iset));
    kset.radius = 0.01;
    prev = worst_case_expectation_kl(values, kset).expectation;
    for (double delta : {0.05, 0.1, 0.2}) {
      double w = worst_case_expectation_kl(values, kset.widened(delta)).expectation;
      CHECK(w >= prev - 1e-9);
      prev = w;
    }
  }
}

TEST_CASE("variant dispatch and singleton conversion") {
  IntervalSet iset;
  iset.nominal = {0.4, 0.6};
  iset.lo = {0.2, 0.4};
  iset.hi = {0.6, 0.8};
  UncertaintySet set = iset;
  std::vector<double> values = {1.0, 3.0};
  CHECK(worst_case_expectation(values, set).expectation > 0.4 * 1 + 0.6 * 3 - 1e-12);
  UncertaintySet single = as_singleton(set);
  CHECK(worst_case_expectation(values, single).expectation == doctest::Approx(0.4 * 1 + 0.6 * 3));
  CHECK(nominal_row(single) == iset.nominal);
}
