#pragma once

// Shared test utilities: random small-instance generation and independent
// reference oracles used to cross-check the production code paths.

#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "dcc/common.hpp"
#include "dcc/mode_model.hpp"
#include "dcc/model.hpp"
#include "dcc/qos.hpp"
#include "dcc/solver.hpp"
#include "dcc/uncertainty.hpp"

namespace testutil {

struct Instance {
  dcc::DataCenterConfig cfg;
  dcc::ModeModel model;
};

// Random row + interval box (always containing the row, always intersecting
// the simplex).
inline dcc::IntervalSet random_interval_row(dcc::Rng& rng, int n, double max_width = 0.3) {
  std::vector<double> p(n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    p[i] = 0.05 + rng.next_double();
    s += p[i];
  }
  for (double& v : p) v /= s;
  dcc::IntervalSet set;
  set.nominal = p;
  set.lo.resize(n);
  set.hi.resize(n);
  for (int i = 0; i < n; ++i) {
    set.lo[i] = std::max(0.0, p[i] - rng.next_double() * max_width);
    set.hi[i] = std::min(1.0, p[i] + rng.next_double() * max_width);
  }
  return set;
}

// Small random instance within the acceptance recipe: B <= 2, M_b <= 3,
// |Lambda| <= 3, |Theta| <= 2, J <= 2. Arrival rates are kept inside the
// full-capacity region so the QoS table has no penalty cells.
inline Instance random_instance(dcc::Rng& rng, bool stationary_prices = true) {
  Instance ins;
  dcc::DataCenterConfig& cfg = ins.cfg;
  cfg.B = 1 + static_cast<int>(rng.next_below(2));
  cfg.J = 1 + static_cast<int>(rng.next_below(2));
  cfg.I = cfg.B;
  cfg.M.resize(cfg.B);
  cfg.r.resize(cfg.B);
  cfg.block_type.resize(cfg.B);
  for (int b = 0; b < cfg.B; ++b) {
    cfg.M[b] = 1 + static_cast<int>(rng.next_below(3));
    cfg.r[b] = 2.0 + 3.0 * rng.next_double();
    cfg.block_type[b] = b;
  }
  cfg.C.resize(cfg.J);
  for (int j = 0; j < cfg.J; ++j) cfg.C[j] = 0.2 + rng.next_double();
  cfg.serve_mask_.assign(static_cast<std::size_t>(cfg.B) * cfg.J, 0);
  for (int j = 0; j < cfg.J; ++j) {
    bool any = false;
    for (int b = 0; b < cfg.B; ++b) {
      bool s = rng.next_double() < 0.7;
      cfg.set_serves(b, j, s);
      any = any || s;
    }
    if (!any) cfg.set_serves(static_cast<int>(rng.next_below(cfg.B)), j, true);
  }

  int horizon = 4;
  int price_rows = stationary_prices ? 1 : horizon;
  cfg.price.horizon = horizon;
  cfg.price.energy_price.assign(price_rows, std::vector<double>(cfg.B));
  cfg.price.switch_on.assign(price_rows, std::vector<double>(cfg.B));
  cfg.price.switch_off.assign(price_rows, std::vector<double>(cfg.B));
  for (int t = 0; t < price_rows; ++t)
    for (int b = 0; b < cfg.B; ++b) {
      cfg.price.energy_price[t][b] = 0.5 + 2.0 * rng.next_double();
      cfg.price.switch_on[t][b] = 0.2 + rng.next_double();
      cfg.price.switch_off[t][b] = 0.2 + rng.next_double();
    }

  // arrivals small enough that even one server per serving block is stable
  dcc::ModeModel& model = ins.model;
  model.num_modes = 1 + static_cast<int>(rng.next_below(2));
  std::size_t L = 1 + rng.next_below(3);
  double min_r = *std::min_element(cfg.r.begin(), cfg.r.end());
  for (std::size_t li = 0; li < L; ++li) {
    dcc::RateVec lam(cfg.J);
    for (int j = 0; j < cfg.J; ++j) lam[j] = 0.5 * min_r * rng.next_double() / cfg.J;
    model.lambda_support.push_back(lam);
  }
  model.emission.assign(model.num_modes, std::vector<double>(L));
  for (int th = 0; th < model.num_modes; ++th) {
    double s = 0.0;
    for (std::size_t li = 0; li < L; ++li) {
      model.emission[th][li] = 0.1 + rng.next_double();
      s += model.emission[th][li];
    }
    for (std::size_t li = 0; li < L; ++li) model.emission[th][li] /= s;
  }
  model.chain.resize(1);
  for (int th = 0; th < model.num_modes; ++th)
    model.chain[0].push_back(random_interval_row(rng, model.num_modes));
  return ins;
}

// Independent recursive definition of the robust optimal value (no shared
// code with the DP implementations). Exponential; tiny instances only.
class RecursiveOracle {
 public:
  RecursiveOracle(const dcc::ModeModel& model, const dcc::DataCenterConfig& cfg, int h, double gamma,
                  const dcc::QosTable& qos)
      : model_(model), cfg_(cfg), h_(h), gamma_(gamma), qos_(qos), xs_(cfg.M) {}

  double value(int t, long long xi, std::size_t li, int th) {
    if (t >= h_) return 0.0;
    auto key = std::make_tuple(t, xi, li, th);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    dcc::OnCounts x = xs_.decode(xi);
    double best = std::numeric_limits<double>::infinity();
    for (long long ai = 0; ai < xs_.count; ++ai) {
      dcc::OnCounts a = xs_.decode(ai);
      double stage = qos_.at(xi, li) + dcc::energy_idle_cost(t, x, cfg_) + dcc::switching_cost(t, x, a, cfg_);
      double cont = 0.0;
      if (gamma_ > 0.0 && t + 1 < h_ + 1) {
        std::vector<double> w(model_.num_modes, 0.0);
        for (int th2 = 0; th2 < model_.num_modes; ++th2)
          for (std::size_t l2 = 0; l2 < model_.support_size(); ++l2)
            w[th2] += model_.emission[th2][l2] * value(t + 1, ai, l2, th2);
        cont = gamma_ * dcc::worst_case_expectation(w, model_.chain_at(t, th)).expectation;
      }
      best = std::min(best, stage + cont);
    }
    memo_[key] = best;
    return best;
  }

 private:
  const dcc::ModeModel& model_;
  const dcc::DataCenterConfig& cfg_;
  int h_;
  double gamma_;
  const dcc::QosTable& qos_;
  dcc::XSpace xs_;
  std::map<std::tuple<int, long long, std::size_t, int>, double> memo_;
};

// Vertex enumeration oracle for max p.v over (box intersect simplex): every
// vertex has at most one coordinate strictly between its bounds.
inline double interval_lp_oracle(const std::vector<double>& values, const dcc::IntervalSet& set) {
  int n = static_cast<int>(values.size());
  double best = -std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << n); ++mask)
    for (int free = 0; free < n; ++free) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i)
        if (i != free) sum += (mask >> i) & 1 ? set.hi[i] : set.lo[i];
      double pf = 1.0 - sum;
      if (pf < set.lo[free] - 1e-12 || pf > set.hi[free] + 1e-12) continue;
      double e = pf * values[free];
      for (int i = 0; i < n; ++i)
        if (i != free) e += ((mask >> i) & 1 ? set.hi[i] : set.lo[i]) * values[i];
      best = std::max(best, e);
    }
  return best;
}

// Grid-search QoS oracle for B <= 2: per class, split q in {0, step, ..., 1}
// toward block 0 (restricted to serving blocks).
inline double qos_grid_oracle(const dcc::OnCounts& x, const dcc::RateVec& lambda, const dcc::DataCenterConfig& cfg,
                              double step = 0.01) {
  int J = cfg.J;
  std::vector<std::vector<double>> splits(J);
  for (int j = 0; j < J; ++j) {
    bool b0 = cfg.serves(0, j) && x[0] > 0;
    bool b1 = cfg.B > 1 && cfg.serves(1, j) && x.size() > 1 && x[1] > 0;
    if (lambda[j] == 0.0) {
      splits[j] = {b0 ? 1.0 : 0.0};
    } else if (b0 && b1) {
      for (double q = 0.0; q <= 1.0 + 1e-12; q += step) splits[j].push_back(std::min(1.0, q));
    } else if (b0) {
      splits[j] = {1.0};
    } else if (b1) {
      splits[j] = {0.0};
    } else {
      return std::numeric_limits<double>::infinity();
    }
  }
  std::vector<std::size_t> idx(J, 0);
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    dcc::LoadBalancingMatrix Q(cfg.B, J);
    for (int j = 0; j < J; ++j) {
      Q.at(0, j) = splits[j][idx[j]];
      if (cfg.B > 1) Q.at(1, j) = 1.0 - splits[j][idx[j]];
    }
    auto c = dcc::qos_cost_given_Q(x, lambda, Q, cfg);
    if (c) best = std::min(best, *c);
    int j = 0;
    for (; j < J; ++j) {
      if (++idx[j] < splits[j].size()) break;
      idx[j] = 0;
    }
    if (j == J) break;
  }
  return best;
}

}  // namespace testutil
