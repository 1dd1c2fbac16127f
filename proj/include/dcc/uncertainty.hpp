#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <variant>
#include <vector>

#include "dcc/common.hpp"

namespace dcc {

// Box-shaped uncertainty around a nominal transition row, intersected with
// the probability simplex.
struct IntervalSet {
  std::vector<double> nominal, lo, hi;

  static IntervalSet singleton(std::vector<double> row) {
    IntervalSet s;
    s.nominal = row;
    s.lo = row;
    s.hi = std::move(row);
    return s;
  }

  void validate() const {
    if (nominal.size() != lo.size() || nominal.size() != hi.size() || nominal.empty())
      throw std::domain_error("interval set: dimension mismatch");
    double slo = 0.0, shi = 0.0;
    for (std::size_t i = 0; i < nominal.size(); ++i) {
      if (!(0.0 <= lo[i] && lo[i] <= nominal[i] && nominal[i] <= hi[i] && hi[i] <= 1.0))
        throw std::domain_error("interval set: bounds must satisfy 0 <= lo <= nominal <= hi <= 1");
      slo += lo[i];
      shi += hi[i];
    }
    if (slo > 1.0 + 1e-12 || shi < 1.0 - 1e-12)
      throw std::domain_error("interval set: empty intersection with the simplex");
  }

  IntervalSet widened(double delta) const {
    IntervalSet s = *this;
    for (std::size_t i = 0; i < nominal.size(); ++i) {
      s.lo[i] = std::max(0.0, lo[i] - delta);
      s.hi[i] = std::min(1.0, hi[i] + delta);
    }
    return s;
  }
};

// KL-ball around a nominal row: {p : KL(p || nominal) <= radius}.
struct LikelihoodSet {
  std::vector<double> nominal;
  double radius = 0.0;

  void validate() const {
    if (nominal.empty()) throw std::domain_error("likelihood set: empty nominal");
    if (radius < 0.0) throw std::domain_error("likelihood set: negative radius");
    double s = std::accumulate(nominal.begin(), nominal.end(), 0.0);
    if (std::abs(s - 1.0) > 1e-9) throw std::domain_error("likelihood set: nominal must be a distribution");
  }

  LikelihoodSet widened(double delta) const {
    LikelihoodSet s = *this;
    s.radius += delta;
    return s;
  }
};

using UncertaintySet = std::variant<IntervalSet, LikelihoodSet>;

struct WorstCase {
  double expectation = 0.0;
  std::vector<double> row;
};

// max over (box ∩ simplex) of p . values, by the greedy water-filling
// allocation: floor everything at lo, then pour the remaining mass into
// entries in descending value order (ties: lower index first).
inline WorstCase worst_case_expectation_interval(const std::vector<double>& values, const IntervalSet& set) {
  set.validate();
  if (values.size() != set.nominal.size()) throw std::domain_error("interval worst case: dimension mismatch");
  std::size_t n = values.size();
  std::vector<double> p = set.lo;
  double remaining = 1.0 - std::accumulate(p.begin(), p.end(), 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  for (std::size_t i : order) {
    if (remaining <= 0.0) break;
    double take = std::min(remaining, set.hi[i] - set.lo[i]);
    p[i] += take;
    remaining -= take;
  }
  WorstCase wc;
  wc.row = std::move(p);
  for (std::size_t i = 0; i < n; ++i) wc.expectation += wc.row[i] * values[i];
  return wc;
}

namespace detail {

inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    d += p[i] * std::log(p[i] / q[i]);
  }
  return d;
}

// p_i(mu) proportional to q_i exp(v_i / mu), computed with a log-sum-exp shift
inline std::vector<double> kl_tilt(const std::vector<double>& values, const std::vector<double>& q, double mu) {
  double vmax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i)
    if (q[i] > 0.0) vmax = std::max(vmax, values[i]);
  std::vector<double> p(values.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (q[i] <= 0.0) continue;
    p[i] = q[i] * std::exp((values[i] - vmax) / mu);
    z += p[i];
  }
  for (double& pi : p) pi /= z;
  return p;
}

}  // namespace detail

// max p . values over KL(p || nominal) <= radius, via bisection on the dual
// temperature. radius == 0 returns the nominal expectation exactly.
inline WorstCase worst_case_expectation_kl(const std::vector<double>& values, const LikelihoodSet& set,
                                           double tol = 1e-9) {
  set.validate();
  if (values.size() != set.nominal.size()) throw std::domain_error("kl worst case: dimension mismatch");
  if (tol <= 0.0) throw std::domain_error("kl worst case: tol must be positive");
  for (double v : values)
    if (!std::isfinite(v)) throw std::domain_error("kl worst case: non-finite value");

  const std::vector<double>& q = set.nominal;
  auto expectation = [&](const std::vector<double>& p) {
    double e = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) e += p[i] * values[i];
    return e;
  };

  WorstCase nominal_wc{expectation(q), q};
  if (set.radius == 0.0) return nominal_wc;

  double vmin = *std::min_element(values.begin(), values.end());
  double vmax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i)
    if (q[i] > 0.0) vmax = std::max(vmax, values[i]);
  if (vmax - vmin < 1e-15) return nominal_wc;  // constant values

  // budget large enough to concentrate on the best supported entries
  double argmax_mass = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (q[i] > 0.0 && values[i] >= vmax - 1e-15) argmax_mass += q[i];
  if (set.radius >= -std::log(argmax_mass)) {
    WorstCase wc;
    wc.row.assign(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i)
      if (q[i] > 0.0 && values[i] >= vmax - 1e-15) wc.row[i] = q[i] / argmax_mass;
    wc.expectation = expectation(wc.row);
    return wc;
  }

  // KL(p(mu) || q) decreases to 0 as mu grows, so double hi until it is
  // inside the budget; bisection then keeps the hi side feasible throughout.
  double lo = 1e-12, hi = vmax - vmin + 1.0;
  while (detail::kl_divergence(detail::kl_tilt(values, q, hi), q) > set.radius) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e18) break;
  }
  std::vector<double> p;
  for (int it = 0; it < 100; ++it) {
    double mu = 0.5 * (lo + hi);
    p = detail::kl_tilt(values, q, mu);
    double d = detail::kl_divergence(p, q);
    if (d > set.radius)
      lo = mu;  // too aggressive, raise the temperature
    else
      hi = mu;
    if (hi - lo < tol * hi) break;
  }
  p = detail::kl_tilt(values, q, hi);  // hi side satisfies the budget
  WorstCase wc{expectation(p), std::move(p)};
  return wc;
}

inline WorstCase worst_case_expectation(const std::vector<double>& values, const UncertaintySet& set,
                                        double tol = 1e-9) {
  if (std::holds_alternative<IntervalSet>(set))
    return worst_case_expectation_interval(values, std::get<IntervalSet>(set));
  return worst_case_expectation_kl(values, std::get<LikelihoodSet>(set), tol);
}

inline const std::vector<double>& nominal_row(const UncertaintySet& set) {
  if (std::holds_alternative<IntervalSet>(set)) return std::get<IntervalSet>(set).nominal;
  return std::get<LikelihoodSet>(set).nominal;
}

inline UncertaintySet widened(const UncertaintySet& set, double delta) {
  if (std::holds_alternative<IntervalSet>(set)) return std::get<IntervalSet>(set).widened(delta);
  return std::get<LikelihoodSet>(set).widened(delta);
}

inline UncertaintySet as_singleton(const UncertaintySet& set) {
  return IntervalSet::singleton(nominal_row(set));
}

}  // namespace dcc
