#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dcc/common.hpp"
#include "dcc/mode_model.hpp"
#include "dcc/model.hpp"
#include "dcc/mpc.hpp"
#include "dcc/qos.hpp"
#include "dcc/solver.hpp"

namespace dcc {

// A capacity policy as seen by the simulator: observes (t, x, lambda index,
// theta) and returns next-slot on-counts. Implementations must be safe for
// concurrent act() calls.
class SimPolicy {
 public:
  virtual ~SimPolicy() = default;
  virtual Action act(int t, long long x_idx, std::size_t lambda_idx, int theta) const = 0;
  virtual std::string label() const = 0;
};

class ThresholdSimPolicy : public SimPolicy {
 public:
  ThresholdSimPolicy(ThresholdPolicy policy, XSpace xspace, std::string name = "mdp")
      : policy_(std::move(policy)), xspace_(std::move(xspace)), label_(std::move(name)) {}

  Action act(int t, long long x_idx, std::size_t, int theta) const override {
    return apply_threshold_rule(xspace_.decode(x_idx), theta, t, policy_);
  }
  std::string label() const override { return label_; }

 private:
  ThresholdPolicy policy_;
  XSpace xspace_;
  std::string label_;
};

// One-slot-lookahead MPC baseline. Plans are memoized per (t, x): the
// forecast box is fixed given theta, so recomputation would be wasted work.
class MpcSimPolicy : public SimPolicy {
 public:
  MpcSimPolicy(const ModeModel& model, const DataCenterConfig& cfg, std::string name = "mpc")
      : model_(model), cfg_(cfg), xspace_(cfg.M), label_(std::move(name)) {
    // the cover-all default makes the forecast theta-independent
    forecast_ = forecast_from_model(model, 0);
    for (int th = 1; th < model.num_modes; ++th) {
      Forecast f = forecast_from_model(model, th);
      for (std::size_t j = 0; j < forecast_.lo.size(); ++j) {
        forecast_.lo[j] = std::min(forecast_.lo[j], f.lo[j]);
        forecast_.hi[j] = std::max(forecast_.hi[j], f.hi[j]);
      }
    }
  }

  Action act(int t, long long x_idx, std::size_t, int) const override {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_pair(t, x_idx);
    auto it = plan_cache_.find(key);
    if (it != plan_cache_.end()) return it->second;
    MpcPlan plan = mpc_plan(t, xspace_.decode(x_idx), forecast_, cfg_, [&](long long ai, const OnCounts& a) {
      auto qit = corner_qos_.find(ai);
      if (qit != corner_qos_.end()) return qit->second;
      QosResult res = optimize_load_balancing(a, forecast_.hi, cfg_);
      double q = res.feasible ? res.cost : std::numeric_limits<double>::infinity();
      corner_qos_.emplace(ai, q);
      return q;
    });
    plan_cache_.emplace(key, plan.a);
    return plan.a;
  }
  std::string label() const override { return label_; }

 private:
  const ModeModel& model_;
  const DataCenterConfig& cfg_;
  XSpace xspace_;
  Forecast forecast_;
  std::string label_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<int, long long>, Action> plan_cache_;
  mutable std::map<long long, double> corner_qos_;
};

struct TrajStep {
  long long x_idx = 0;
  std::size_t lambda_idx = 0;
  int theta = 0;
  long long action_idx = 0;
  Money cost = 0.0;
};

struct Trajectory {
  std::vector<TrajStep> steps;
  std::uint64_t seed = 0;
  std::string policy_label;
  Money total() const {
    Money s = 0.0;
    for (const auto& st : steps) s += st.cost;
    return s;
  }
};

struct SimStart {
  long long x_idx = 0;
  std::size_t lambda_idx = 0;
  int theta = 0;
};

// Default start: all servers on, the mode-stationary theta, its most likely
// arrival vector.
inline SimStart default_start(const ModeModel& model, const QosTable& qos) {
  SimStart s;
  s.x_idx = qos.xspace.count - 1;
  std::vector<double> pi = model.nominal_stationary();
  s.theta = 0;
  for (int th = 1; th < model.num_modes; ++th)
    if (pi[th] > pi[s.theta]) s.theta = th;
  s.lambda_idx = 0;
  for (std::size_t li = 1; li < model.support_size(); ++li)
    if (model.emission[s.theta][li] > model.emission[s.theta][s.lambda_idx]) s.lambda_idx = li;
  return s;
}

// Simulation runs on nominal chain rows: robustness is a property of the
// policy, not of the simulated ground truth.
inline Trajectory sample_trajectory(const ModeModel& model, const DataCenterConfig& cfg, const SimPolicy& policy,
                                    const SimStart& s0, int h, Rng rng, const QosTable& qos) {
  Trajectory traj;
  traj.policy_label = policy.label();
  traj.steps.reserve(h);
  long long xi = s0.x_idx;
  std::size_t li = s0.lambda_idx;
  int th = s0.theta;
  for (int t = 0; t < h; ++t) {
    OnCounts x = qos.xspace.decode(xi);
    Action a = policy.act(t, xi, li, th);
    long long ai = qos.xspace.index(a);
    TrajStep step;
    step.x_idx = xi;
    step.lambda_idx = li;
    step.theta = th;
    step.action_idx = ai;
    step.cost = qos.at(xi, li) + energy_idle_cost(t, x, cfg) + switching_cost(t, x, a, cfg);
    traj.steps.push_back(step);
    th = static_cast<int>(rng.categorical(model.nominal_chain_row(t, th)));
    li = rng.categorical(model.emission[th]);
    xi = ai;  // next x equals the chosen action
  }
  return traj;
}

struct BatchStats {
  std::vector<double> mean;    // cumulative cost per slot
  std::vector<double> stddev;  // over runs
  int n_runs = 0;
};

inline BatchStats run_batch(const ModeModel& model, const DataCenterConfig& cfg, const SimPolicy& policy,
                            int n_runs, int h, std::uint64_t seed, const QosTable& qos, int jobs = 0) {
  if (n_runs < 2) throw std::invalid_argument("run_batch: n_runs must be >= 2");
  SimStart s0 = default_start(model, qos);
  Rng master(seed);
  std::vector<std::vector<double>> cum(n_runs);
  parallel_for(static_cast<std::size_t>(n_runs), jobs, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t run = lo; run < hi; ++run) {
      Trajectory traj = sample_trajectory(model, cfg, policy, s0, h, master.split(run), qos);
      std::vector<double> c(h, 0.0);
      double acc = 0.0;
      for (int t = 0; t < h; ++t) {
        acc += traj.steps[t].cost;
        c[t] = acc;
      }
      cum[run] = std::move(c);
    }
  });
  BatchStats stats;
  stats.n_runs = n_runs;
  stats.mean.assign(h, 0.0);
  stats.stddev.assign(h, 0.0);
  for (int t = 0; t < h; ++t) {
    double sum = 0.0, sumsq = 0.0;
    for (int run = 0; run < n_runs; ++run) {
      sum += cum[run][t];
      sumsq += cum[run][t] * cum[run][t];
    }
    double mean = sum / n_runs;
    stats.mean[t] = mean;
    stats.stddev[t] = std::sqrt(std::max(0.0, (sumsq - n_runs * mean * mean) / (n_runs - 1)));
  }
  return stats;
}

struct ComparisonReport {
  std::vector<std::string> labels;
  std::vector<BatchStats> stats;  // one per policy, paired seeds (common random numbers)
  int h = 0;
};

inline ComparisonReport compare_policies(const ModeModel& model, const DataCenterConfig& cfg,
                                         const std::vector<const SimPolicy*>& policies, int n_runs, int h,
                                         std::uint64_t seed, const QosTable& qos, int jobs = 0) {
  if (policies.size() < 2) throw std::invalid_argument("compare_policies: need at least two policies");
  ComparisonReport report;
  report.h = h;
  for (const SimPolicy* p : policies) {
    report.labels.push_back(p->label());
    report.stats.push_back(run_batch(model, cfg, *p, n_runs, h, seed, qos, jobs));
  }
  return report;
}

}  // namespace dcc
