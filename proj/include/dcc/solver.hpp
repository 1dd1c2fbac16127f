#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dcc/common.hpp"
#include "dcc/mode_model.hpp"
#include "dcc/model.hpp"
#include "dcc/qos.hpp"
#include "dcc/uncertainty.hpp"

namespace dcc {

inline int num_orthants(int B) { return 1 << B; }

// Ascending index order is lexicographic over k with -1 < +1.
inline std::vector<int> orthant_vector(int idx, int B) {
  std::vector<int> k(B);
  for (int b = 0; b < B; ++b) k[b] = (idx >> (B - 1 - b)) & 1 ? 1 : -1;
  return k;
}

struct ThresholdEntry {
  OnCounts tau;
  double h_star = 0.0;
};

// Per slot and mode, one threshold vector per orthant. A stationary policy
// stores a single slot and serves it for every t.
struct ThresholdPolicy {
  int B = 0;
  int num_modes = 0;
  bool is_stationary = false;
  std::vector<std::vector<std::vector<ThresholdEntry>>> entries;  // [t][theta][k]

  int horizon() const { return static_cast<int>(entries.size()); }

  const ThresholdEntry& at(int t, int theta, int k_idx) const {
    int ti = is_stationary ? 0 : std::min(std::max(t, 0), horizon() - 1);
    return entries[ti][theta][k_idx];
  }
  ThresholdEntry& at(int t, int theta, int k_idx) {
    int ti = is_stationary ? 0 : std::min(std::max(t, 0), horizon() - 1);
    return entries[ti][theta][k_idx];
  }
};

// Dense optimal values over (x, lambda, theta). Either every slot is kept
// (full == true, v.size() == h+1 with v[h] == 0) or only slot 0.
struct ValueTable {
  long long num_x = 0;
  std::size_t num_lambda = 0;
  int num_modes = 0;
  int h = 0;
  bool full = true;
  std::vector<std::vector<double>> v;

  std::size_t cells() const { return static_cast<std::size_t>(num_x) * num_lambda * num_modes; }
  std::size_t cell(long long xi, std::size_t li, int theta) const {
    return (static_cast<std::size_t>(xi) * num_lambda + li) * num_modes + theta;
  }
  double at(int t, long long xi, std::size_t li, int theta) const {
    if (!full && t != 0) throw std::domain_error("value table kept only slot 0");
    return v[full ? t : 0][cell(xi, li, theta)];
  }
};

// Move to the first (lexicographically smallest) matching orthant threshold,
// otherwise do nothing.
inline Action apply_threshold_rule(const OnCounts& x, int theta, int t, const ThresholdPolicy& policy) {
  int K = num_orthants(policy.B);
  for (int ki = 0; ki < K; ++ki) {
    const ThresholdEntry& e = policy.at(t, theta, ki);
    bool match = true;
    for (int b = 0; b < policy.B && match; ++b) {
      int kb = (ki >> (policy.B - 1 - b)) & 1 ? 1 : -1;
      if (kb * (e.tau[b] - x[b]) < 0) match = false;
    }
    if (match) return e.tau;
  }
  return x;
}

// g_t^k(x, lambda): QoS + idle energy + x-linear switching term.
inline double g_term(int t, const std::vector<int>& k, long long x_idx, std::size_t lambda_idx,
                     const QosTable& qos, const DataCenterConfig& cfg) {
  OnCounts x = qos.xspace.decode(x_idx);
  double g = qos.at(x_idx, lambda_idx) + energy_idle_cost(t, x, cfg);
  for (int b = 0; b < cfg.B; ++b)
    g += x[b] * ((1 - k[b]) / 2.0 * cfg.price.c_minus(t, b) - (1 + k[b]) / 2.0 * cfg.price.c_plus(t, b));
  return g;
}

// h_t^k(a, theta): a-linear switching term + discounted robust continuation.
inline double h_term(int t, const std::vector<int>& k, const Action& a, int theta,
                     const std::vector<double>& v_next, const ValueTable& layout, const ModeModel& model,
                     const DataCenterConfig& cfg, double gamma, double kl_tol = 1e-9) {
  double h = 0.0;
  for (int b = 0; b < cfg.B; ++b)
    h += a[b] * ((1 + k[b]) / 2.0 * cfg.price.c_plus(t, b) - (1 - k[b]) / 2.0 * cfg.price.c_minus(t, b));
  if (gamma == 0.0) return h;
  XSpace xs(cfg.M);
  long long ai = xs.index(a);
  std::vector<double> w(model.num_modes, 0.0);
  for (int th2 = 0; th2 < model.num_modes; ++th2)
    for (std::size_t li = 0; li < model.support_size(); ++li)
      w[th2] += model.emission[th2][li] * v_next[layout.cell(ai, li, th2)];
  return h + gamma * worst_case_expectation(w, model.chain_at(t, theta), kl_tol).expectation;
}

struct SolveOptions {
  int jobs = 0;
  bool keep_values = true;
  double kl_tol = 1e-9;
};

struct SolveResult {
  ThresholdPolicy policy;
  ValueTable values;
};

namespace detail {

struct BackupScratch {
  std::vector<std::vector<double>> w;     // [theta'][xi]
  std::vector<std::vector<double>> cont;  // [theta][xi] discounted robust continuation
};

// One slot of the threshold recursion: computes thresholds per (theta, k) and
// the value of the threshold decision rule against v_next.
inline void threshold_backup(int t, const ModeModel& model, const DataCenterConfig& cfg, const QosTable& qos,
                             double gamma, const std::vector<double>& v_next, const ValueTable& layout,
                             const SolveOptions& opts, std::vector<std::vector<ThresholdEntry>>& slot_entries,
                             std::vector<double>& v_cur, BackupScratch& scr) {
  const XSpace& xs = qos.xspace;
  const std::size_t nx = static_cast<std::size_t>(xs.count);
  const std::size_t L = model.support_size();
  const int T = model.num_modes;
  const int B = cfg.B;
  const int K = num_orthants(B);

  scr.w.assign(T, std::vector<double>(nx, 0.0));
  scr.cont.assign(T, std::vector<double>(nx, 0.0));
  if (gamma > 0.0) {
    parallel_for(nx, opts.jobs, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t xi = lo; xi < hi; ++xi)
        for (int th2 = 0; th2 < T; ++th2) {
          double acc = 0.0;
          for (std::size_t li = 0; li < L; ++li)
            acc += model.emission[th2][li] * v_next[layout.cell(static_cast<long long>(xi), li, th2)];
          scr.w[th2][xi] = acc;
        }
    });
    parallel_for(nx, opts.jobs, [&](std::size_t lo, std::size_t hi) {
      std::vector<double> vals(T);
      for (std::size_t xi = lo; xi < hi; ++xi) {
        for (int th2 = 0; th2 < T; ++th2) vals[th2] = scr.w[th2][xi];
        for (int th = 0; th < T; ++th)
          scr.cont[th][xi] = gamma * worst_case_expectation(vals, model.chain_at(t, th), opts.kl_tol).expectation;
      }
    });
  }

  // a-linear switching coefficients per orthant
  std::vector<std::vector<double>> coef(K, std::vector<double>(B));
  for (int ki = 0; ki < K; ++ki)
    for (int b = 0; b < B; ++b) {
      int kb = (ki >> (B - 1 - b)) & 1 ? 1 : -1;
      coef[ki][b] = kb > 0 ? cfg.price.c_plus(t, b) : -cfg.price.c_minus(t, b);
    }

  slot_entries.assign(T, std::vector<ThresholdEntry>(K));
  for (int th = 0; th < T; ++th)
    for (int ki = 0; ki < K; ++ki) {
      double best = std::numeric_limits<double>::infinity();
      long long best_a = 0;
      OnCounts a(B, 0);
      for (std::size_t ai = 0; ai < nx; ++ai) {
        double lin = 0.0;
        for (int b = 0; b < B; ++b) lin += coef[ki][b] * a[b];
        double hval = lin + scr.cont[th][ai];
        if (hval < best) {  // strict: ties keep the lexicographically smaller a
          best = hval;
          best_a = static_cast<long long>(ai);
        }
        // advance mixed-radix counter (lexicographic order)
        for (int b = B - 1; b >= 0; --b) {
          if (++a[b] <= cfg.M[b]) break;
          a[b] = 0;
        }
      }
      slot_entries[th][ki] = ThresholdEntry{xs.decode(best_a), best};
    }

  // value of the threshold rule; on matched states this equals
  // max_k [g^k + h*^k], on unmatched states it is f(x, x)
  parallel_for(nx, opts.jobs, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t xi = lo; xi < hi; ++xi) {
      OnCounts x = xs.decode(static_cast<long long>(xi));
      double energy_x = 0.0;
      for (int b = 0; b < B; ++b) energy_x += cfg.price.energy(t, b, x[b]);
      for (int th = 0; th < T; ++th) {
        long long a_idx = static_cast<long long>(xi);
        double move_cost = 0.0;
        for (int ki = 0; ki < K; ++ki) {
          const ThresholdEntry& e = slot_entries[th][ki];
          bool match = true;
          for (int b = 0; b < B && match; ++b) {
            int kb = (ki >> (B - 1 - b)) & 1 ? 1 : -1;
            if (kb * (e.tau[b] - x[b]) < 0) match = false;
          }
          if (match) {
            a_idx = xs.index(e.tau);
            for (int b = 0; b < B; ++b) {
              int d = e.tau[b] - x[b];
              move_cost += d > 0 ? cfg.price.c_plus(t, b) * d : -cfg.price.c_minus(t, b) * d;
            }
            break;
          }
        }
        double base = energy_x + move_cost + scr.cont[th][static_cast<std::size_t>(a_idx)];
        for (std::size_t li = 0; li < L; ++li)
          v_cur[layout.cell(static_cast<long long>(xi), li, th)] = qos.at(static_cast<long long>(xi), li) + base;
      }
    }
  });
}

}  // namespace detail

// Algorithm-style threshold backward induction. Values are those attained by
// the computed threshold policy; under the convexity hypothesis they coincide
// with the flat robust optimum.
inline SolveResult backward_induction(const ModeModel& model, const DataCenterConfig& cfg, int h, double gamma,
                                      const QosTable& qos, const SolveOptions& opts = {}) {
  if (h < 1) throw std::invalid_argument("horizon must be >= 1");
  model.validate();
  cfg.validate();

  SolveResult out;
  out.policy.B = cfg.B;
  out.policy.num_modes = model.num_modes;
  out.policy.entries.resize(h);

  out.values.num_x = qos.xspace.count;
  out.values.num_lambda = model.support_size();
  out.values.num_modes = model.num_modes;
  out.values.h = h;
  out.values.full = opts.keep_values;
  std::size_t cells = out.values.cells();
  if (opts.keep_values) {
    out.values.v.assign(h + 1, std::vector<double>(cells, 0.0));
  } else {
    out.values.v.assign(1, std::vector<double>(cells, 0.0));
  }

  std::vector<double> v_next(cells, 0.0), v_cur(cells, 0.0);
  detail::BackupScratch scr;
  for (int t = h - 1; t >= 0; --t) {
    detail::threshold_backup(t, model, cfg, qos, gamma, v_next, out.values, opts, out.policy.entries[t], v_cur, scr);
    if (opts.keep_values) out.values.v[t] = v_cur;
    std::swap(v_next, v_cur);
  }
  if (!opts.keep_values) out.values.v[0] = std::move(v_next);
  return out;
}

struct FlatResult {
  ValueTable values;
  // best_action[t][cell] = x-index of a flat Bellman minimizer (lex smallest)
  std::vector<std::vector<long long>> best_action;
};

namespace detail {

inline void flat_backup(int t, const ModeModel& model, const DataCenterConfig& cfg, const QosTable& qos,
                        double gamma, const std::vector<double>& v_next, const ValueTable& layout,
                        const SolveOptions& opts, std::vector<double>& v_cur, std::vector<long long>* actions,
                        BackupScratch& scr) {
  const XSpace& xs = qos.xspace;
  const std::size_t nx = static_cast<std::size_t>(xs.count);
  const std::size_t L = model.support_size();
  const int T = model.num_modes;

  scr.w.assign(T, std::vector<double>(nx, 0.0));
  scr.cont.assign(T, std::vector<double>(nx, 0.0));
  if (gamma > 0.0) {
    for (std::size_t xi = 0; xi < nx; ++xi) {
      std::vector<double> vals(T);
      for (int th2 = 0; th2 < T; ++th2) {
        double acc = 0.0;
        for (std::size_t li = 0; li < L; ++li)
          acc += model.emission[th2][li] * v_next[layout.cell(static_cast<long long>(xi), li, th2)];
        vals[th2] = acc;
      }
      for (int th = 0; th < T; ++th)
        scr.cont[th][xi] = gamma * worst_case_expectation(vals, model.chain_at(t, th), opts.kl_tol).expectation;
    }
  }

  parallel_for(nx, opts.jobs, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t xi = lo; xi < hi; ++xi) {
      OnCounts x = xs.decode(static_cast<long long>(xi));
      double energy_x = 0.0;
      for (int b = 0; b < cfg.B; ++b) energy_x += cfg.price.energy(t, b, x[b]);
      for (int th = 0; th < T; ++th) {
        double best = std::numeric_limits<double>::infinity();
        long long best_a = 0;
        OnCounts a(cfg.B, 0);
        for (std::size_t ai = 0; ai < nx; ++ai) {
          double sw = 0.0;
          for (int b = 0; b < cfg.B; ++b) {
            int d = a[b] - x[b];
            sw += d > 0 ? cfg.price.c_plus(t, b) * d : -cfg.price.c_minus(t, b) * d;
          }
          double val = energy_x + sw + scr.cont[th][ai];
          if (val < best) {
            best = val;
            best_a = static_cast<long long>(ai);
          }
          for (int b = cfg.B - 1; b >= 0; --b) {
            if (++a[b] <= cfg.M[b]) break;
            a[b] = 0;
          }
        }
        for (std::size_t li = 0; li < L; ++li) {
          std::size_t c = layout.cell(static_cast<long long>(xi), li, th);
          v_cur[c] = qos.at(static_cast<long long>(xi), li) + best;
          if (actions) (*actions)[c] = best_a;
        }
      }
    }
  });
}

}  // namespace detail

// Reference oracle: robust backward induction by direct minimization over the
// full action space. Intended for instances small enough to enumerate.
inline FlatResult flat_backward_induction(const ModeModel& model, const DataCenterConfig& cfg, int h, double gamma,
                                          const QosTable& qos, const SolveOptions& opts = {},
                                          bool keep_actions = false) {
  if (h < 1) throw std::invalid_argument("horizon must be >= 1");
  model.validate();
  cfg.validate();

  FlatResult out;
  out.values.num_x = qos.xspace.count;
  out.values.num_lambda = model.support_size();
  out.values.num_modes = model.num_modes;
  out.values.h = h;
  out.values.full = true;
  std::size_t cells = out.values.cells();
  out.values.v.assign(h + 1, std::vector<double>(cells, 0.0));
  if (keep_actions) out.best_action.assign(h, std::vector<long long>(cells, 0));

  detail::BackupScratch scr;
  for (int t = h - 1; t >= 0; --t)
    detail::flat_backup(t, model, cfg, qos, gamma, out.values.v[t + 1], out.values, opts, out.values.v[t],
                        keep_actions ? &out.best_action[t] : nullptr, scr);
  return out;
}

struct InfiniteResult {
  ThresholdPolicy policy;
  std::vector<double> values;       // stationary v over cells
  std::vector<double> sup_changes;  // per-iteration sup-norm change
  int iterations = 0;
};

// Iterate the threshold backup to its fixed point (stationary model only).
inline InfiniteResult infinite_horizon_solve(const ModeModel& model, const DataCenterConfig& cfg, double gamma,
                                             double tol, const QosTable& qos, const SolveOptions& opts = {},
                                             int max_iters = 100000) {
  model.validate();
  cfg.validate();
  if (!model.stationary() || cfg.price.time_varying())
    throw std::domain_error("infinite horizon requires a stationary model and prices");
  if (gamma < 0.0 || gamma >= 1.0) throw std::domain_error("infinite horizon requires gamma in [0, 1)");
  if (tol <= 0.0) throw std::domain_error("tol must be positive");

  InfiniteResult out;
  out.policy.B = cfg.B;
  out.policy.num_modes = model.num_modes;
  out.policy.is_stationary = true;
  out.policy.entries.resize(1);

  ValueTable layout;
  layout.num_x = qos.xspace.count;
  layout.num_lambda = model.support_size();
  layout.num_modes = model.num_modes;
  layout.h = 1;

  std::size_t cells = layout.cells();
  std::vector<double> v(cells, 0.0), v_new(cells, 0.0);
  detail::BackupScratch scr;
  for (int it = 0; it < max_iters; ++it) {
    detail::threshold_backup(0, model, cfg, qos, gamma, v, layout, opts, out.policy.entries[0], v_new, scr);
    double diff = 0.0;
    for (std::size_t c = 0; c < cells; ++c) diff = std::max(diff, std::abs(v_new[c] - v[c]));
    std::swap(v, v_new);
    out.sup_changes.push_back(diff);
    out.iterations = it + 1;
    if (diff <= tol) break;
  }
  out.values = std::move(v);
  return out;
}

// Fixed-policy robust evaluation (stationary): value iteration for the rule
// induced by the thresholds, adversary re-optimized each sweep.
inline std::vector<double> robust_policy_eval(const ThresholdPolicy& policy, const ModeModel& model,
                                              const DataCenterConfig& cfg, double gamma, double tol,
                                              const QosTable& qos, int max_iters = 100000) {
  const XSpace& xs = qos.xspace;
  const std::size_t nx = static_cast<std::size_t>(xs.count);
  const std::size_t L = model.support_size();
  const int T = model.num_modes;

  ValueTable layout;
  layout.num_x = xs.count;
  layout.num_lambda = L;
  layout.num_modes = T;
  layout.h = 1;

  // action and immediate cost per (x, theta)
  std::vector<long long> act(nx * T);
  std::vector<double> base(nx * T);
  for (std::size_t xi = 0; xi < nx; ++xi) {
    OnCounts x = xs.decode(static_cast<long long>(xi));
    double energy_x = energy_idle_cost(0, x, cfg);
    for (int th = 0; th < T; ++th) {
      Action a = apply_threshold_rule(x, th, 0, policy);
      act[xi * T + th] = xs.index(a);
      base[xi * T + th] = energy_x + switching_cost(0, x, a, cfg);
    }
  }

  std::vector<double> v(layout.cells(), 0.0), v_new(layout.cells(), 0.0);
  std::vector<std::vector<double>> w(T, std::vector<double>(nx, 0.0));
  for (int it = 0; it < max_iters; ++it) {
    for (std::size_t xi = 0; xi < nx; ++xi)
      for (int th2 = 0; th2 < T; ++th2) {
        double acc = 0.0;
        for (std::size_t li = 0; li < L; ++li)
          acc += model.emission[th2][li] * v[layout.cell(static_cast<long long>(xi), li, th2)];
        w[th2][xi] = acc;
      }
    double diff = 0.0;
    std::vector<double> vals(T);
    for (std::size_t xi = 0; xi < nx; ++xi)
      for (int th = 0; th < T; ++th) {
        long long ai = act[xi * T + th];
        double cont = 0.0;
        if (gamma > 0.0) {
          for (int th2 = 0; th2 < T; ++th2) vals[th2] = w[th2][static_cast<std::size_t>(ai)];
          cont = gamma * worst_case_expectation(vals, model.chain_at(0, th)).expectation;
        }
        for (std::size_t li = 0; li < L; ++li) {
          std::size_t c = layout.cell(static_cast<long long>(xi), li, th);
          double nv = qos.at(static_cast<long long>(xi), li) + base[xi * T + th] + cont;
          diff = std::max(diff, std::abs(nv - v[c]));
          v_new[c] = nv;
        }
      }
    std::swap(v, v_new);
    if (diff <= tol) break;
  }
  return v;
}

struct ValueEstimate {
  double mean = 0.0;       // adversarial-row estimate (nominal when no table given)
  double std_error = 0.0;
  double nominal_mean = 0.0;
  double nominal_std_error = 0.0;
};

// Mean discounted rollout cost from uniform start states. When a value table
// is supplied, transition rows are resolved adversarially against it; the
// nominal-row estimate is always reported alongside.
inline ValueEstimate estimate_policy_value(const ThresholdPolicy& policy, const ModeModel& model,
                                           const DataCenterConfig& cfg, double gamma, int n, int horizon_cutoff,
                                           Rng& rng, const QosTable& qos,
                                           const std::vector<double>* adversarial_values = nullptr) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  const XSpace& xs = qos.xspace;
  const std::size_t nx = static_cast<std::size_t>(xs.count);
  const std::size_t L = model.support_size();
  const int T = model.num_modes;

  ValueTable layout;
  layout.num_x = xs.count;
  layout.num_lambda = L;
  layout.num_modes = T;
  layout.h = 1;

  auto rollout = [&](Rng& r, bool adversarial) {
    long long xi = static_cast<long long>(r.next_below(nx));
    std::size_t li = static_cast<std::size_t>(r.next_below(L));
    int th = static_cast<int>(r.next_below(static_cast<std::uint64_t>(T)));
    double total = 0.0, disc = 1.0;
    std::vector<double> vals(T);
    for (int step = 0; step < horizon_cutoff; ++step) {
      OnCounts x = xs.decode(xi);
      Action a = apply_threshold_rule(x, th, step, policy);
      long long ai = xs.index(a);
      total += disc * (qos.at(xi, li) + energy_idle_cost(step, x, cfg) + switching_cost(step, x, a, cfg));
      disc *= gamma;
      if (disc == 0.0) break;
      const std::vector<double>* row;
      std::vector<double> adv_row;
      if (adversarial && adversarial_values) {
        for (int th2 = 0; th2 < T; ++th2) {
          double acc = 0.0;
          for (std::size_t l2 = 0; l2 < L; ++l2)
            acc += model.emission[th2][l2] * (*adversarial_values)[layout.cell(ai, l2, th2)];
          vals[th2] = acc;
        }
        adv_row = worst_case_expectation(vals, model.chain_at(step, th)).row;
        row = &adv_row;
      } else {
        row = &model.nominal_chain_row(step, th);
      }
      th = static_cast<int>(r.categorical(*row));
      li = r.categorical(model.emission[th]);
      xi = ai;
    }
    return total;
  };

  ValueEstimate est;
  auto run = [&](bool adversarial, double& mean, double& se) {
    Rng r = rng.split(adversarial ? 1 : 2);
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
      double c = rollout(r, adversarial);
      sum += c;
      sumsq += c * c;
    }
    mean = sum / n;
    double var = n > 1 ? std::max(0.0, (sumsq - n * mean * mean) / (n - 1)) : 0.0;
    se = std::sqrt(var / n);
  };
  run(false, est.nominal_mean, est.nominal_std_error);
  if (adversarial_values) {
    run(true, est.mean, est.std_error);
  } else {
    est.mean = est.nominal_mean;
    est.std_error = est.nominal_std_error;
  }
  return est;
}

struct MonteCarloOptions {
  int horizon_cutoff = 100;
  int max_sweeps = 50;
  double eval_tol = 1e-8;
};

struct MonteCarloResult {
  ThresholdPolicy policy;
  double v_hat = 0.0;          // adversarial-row estimate at the final sweep
  double v_hat_nominal = 0.0;  // nominal-row estimate
  int sweeps = 0;
};

// Coordinate descent over thresholds with a sampled objective; deterministic
// given the seed (candidates share random numbers within a sweep).
inline MonteCarloResult monte_carlo_search(const ModeModel& model, const DataCenterConfig& cfg, double gamma,
                                           int n, double eps, std::uint64_t seed, const QosTable& qos,
                                           const MonteCarloOptions& opts = {}) {
  if (n < 1 || eps <= 0.0) throw std::invalid_argument("monte carlo search: n >= 1 and eps > 0 required");
  if (!model.stationary() || cfg.price.time_varying())
    throw std::domain_error("monte carlo search requires a stationary model");

  const XSpace& xs = qos.xspace;
  const std::size_t nx = static_cast<std::size_t>(xs.count);
  const int T = model.num_modes;
  const int K = num_orthants(cfg.B);

  MonteCarloResult out;
  out.policy.B = cfg.B;
  out.policy.num_modes = T;
  out.policy.is_stationary = true;
  out.policy.entries.assign(1, std::vector<std::vector<ThresholdEntry>>(T, std::vector<ThresholdEntry>(K)));

  Rng init(seed);
  for (int th = 0; th < T; ++th)
    for (int ki = 0; ki < K; ++ki)
      out.policy.entries[0][th][ki] = ThresholdEntry{xs.decode(static_cast<long long>(init.next_below(nx))), 0.0};

  double v_prev = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    std::vector<double> adv = robust_policy_eval(out.policy, model, cfg, gamma, opts.eval_tol, qos);
    double v_sweep = 0.0;
    for (int th = 0; th < T; ++th)
      for (int ki = 0; ki < K; ++ki) {
        double best = std::numeric_limits<double>::infinity();
        long long best_tau = xs.index(out.policy.entries[0][th][ki].tau);
        for (std::size_t cand = 0; cand < nx; ++cand) {
          out.policy.entries[0][th][ki].tau = xs.decode(static_cast<long long>(cand));
          Rng r(seed ^ (0x1000003ULL * (sweep + 1)));  // common random numbers across candidates
          ValueEstimate est =
              estimate_policy_value(out.policy, model, cfg, gamma, n, opts.horizon_cutoff, r, qos, &adv);
          if (est.mean < best) {
            best = est.mean;
            best_tau = static_cast<long long>(cand);
          }
        }
        out.policy.entries[0][th][ki].tau = xs.decode(best_tau);
        out.policy.entries[0][th][ki].h_star = best;
        v_sweep = best;
      }
    out.sweeps = sweep + 1;
    out.v_hat = v_sweep;
    if (std::abs(v_prev - v_sweep) <= eps) break;
    v_prev = v_sweep;
  }

  Rng final_rng(seed ^ 0xfeedULL);
  std::vector<double> adv = robust_policy_eval(out.policy, model, cfg, gamma, opts.eval_tol, qos);
  ValueEstimate est = estimate_policy_value(out.policy, model, cfg, gamma, n, opts.horizon_cutoff, final_rng, qos, &adv);
  out.v_hat = est.mean;
  out.v_hat_nominal = est.nominal_mean;
  return out;
}

// Discrete midpoint test along every x axis: f(x-e_b) + f(x+e_b) >= 2 f(x).
// Cells at or above inf_threshold stand in for +infinity (big-M): a triple
// with an infinite endpoint holds trivially, an infinite midpoint between
// finite endpoints is a violation.
template <typename CellFn>
inline bool axis_convex_over_x(const XSpace& xs, CellFn&& f, double tol = 1e-9,
                               double inf_threshold = std::numeric_limits<double>::infinity()) {
  for (long long xi = 0; xi < xs.count; ++xi) {
    OnCounts x = xs.decode(xi);
    for (std::size_t b = 0; b < x.size(); ++b) {
      if (x[b] == 0 || x[b] == xs.M[b]) continue;
      OnCounts lo = x, hi = x;
      --lo[b];
      ++hi[b];
      double fl = f(xs.index(lo)), fm = f(xi), fh = f(xs.index(hi));
      if (fl >= inf_threshold || fh >= inf_threshold) continue;
      if (fm >= inf_threshold) return false;
      if (fl + fh < 2.0 * fm - tol) return false;
    }
  }
  return true;
}

inline bool qos_table_axis_convex(const QosTable& qos, double tol = 1e-9) {
  for (std::size_t li = 0; li < qos.lambda_support.size(); ++li)
    if (!axis_convex_over_x(qos.xspace, [&](long long xi) { return qos.at(xi, li); }, tol)) return false;
  return true;
}

inline bool values_axis_convex(const ValueTable& vt, const XSpace& xs, double tol = 1e-9,
                               double inf_threshold = std::numeric_limits<double>::infinity()) {
  for (int t = 0; t < (vt.full ? vt.h : 1); ++t)
    for (std::size_t li = 0; li < vt.num_lambda; ++li)
      for (int th = 0; th < vt.num_modes; ++th)
        if (!axis_convex_over_x(
                xs, [&](long long xi) { return vt.at(t, xi, li, th); }, tol, inf_threshold))
          return false;
  return true;
}

}  // namespace dcc
