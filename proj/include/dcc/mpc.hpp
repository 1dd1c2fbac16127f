#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include "dcc/mode_model.hpp"
#include "dcc/model.hpp"
#include "dcc/qos.hpp"

namespace dcc {

// Per-class arrival-rate intervals over the one-slot lookahead window.
struct Forecast {
  RateVec lo, hi;
};

// Interval forecast covering every arrival vector emitted by any mode the
// chain can reach from theta (the "cover all possible transitions" default).
inline Forecast forecast_from_model(const ModeModel& model, int theta, int t = 0) {
  std::size_t J = model.lambda_support.front().size();
  Forecast f{RateVec(J, std::numeric_limits<double>::infinity()), RateVec(J, 0.0)};
  const UncertaintySet& set = model.chain_at(t, theta);
  const std::vector<double>& nom = nominal_row(set);
  for (int th2 = 0; th2 < model.num_modes; ++th2) {
    bool reachable = nom[th2] > 0.0;
    if (std::holds_alternative<IntervalSet>(set)) reachable = std::get<IntervalSet>(set).hi[th2] > 0.0;
    if (!reachable) continue;
    for (std::size_t li = 0; li < model.support_size(); ++li) {
      if (model.emission[th2][li] <= 0.0) continue;
      for (std::size_t j = 0; j < J; ++j) {
        f.lo[j] = std::min(f.lo[j], model.lambda_support[li][j]);
        f.hi[j] = std::max(f.hi[j], model.lambda_support[li][j]);
      }
    }
  }
  for (std::size_t j = 0; j < J; ++j)
    if (!std::isfinite(f.lo[j])) f.lo[j] = 0.0;
  return f;
}

struct MpcPlan {
  Action a;
  Money planned_worst_cost = 0.0;
  bool infeasible = false;  // even full capacity cannot carry the worst case
};

// First stage: capacity for the next slot minimizing the worst-case stage
// cost over the forecast box. QoS is nondecreasing in lambda componentwise,
// so the worst case sits at the upper corner.
template <typename QosEval>
inline MpcPlan mpc_plan(int t, const OnCounts& x, const Forecast& forecast, const DataCenterConfig& cfg,
                        QosEval&& qos_at_corner) {
  if (forecast.lo.empty() || forecast.lo.size() != forecast.hi.size())
    throw std::invalid_argument("mpc: empty forecast");
  require_box(x, cfg, "x");

  XSpace xs(cfg.M);
  MpcPlan plan;
  plan.a = cfg.M;
  double energy_x = energy_idle_cost(t, x, cfg);

  double best = std::numeric_limits<double>::infinity();
  long long best_a = xs.index(cfg.M);
  OnCounts a(cfg.B, 0);
  for (long long ai = 0; ai < xs.count; ++ai) {
    double q = qos_at_corner(ai, a);  // +inf when the corner overloads a
    if (std::isfinite(q)) {
      double cost = q + energy_x + switching_cost(t, x, a, cfg);
      if (cost < best) {
        best = cost;
        best_a = ai;
      }
    }
    for (int b = cfg.B - 1; b >= 0; --b) {
      if (++a[b] <= cfg.M[b]) break;
      a[b] = 0;
    }
  }

  if (!std::isfinite(best)) {
    plan.a = cfg.M;
    plan.infeasible = true;
    double mass = 0.0;
    for (double l : forecast.hi) mass += l;
    plan.planned_worst_cost = big_m_penalty(cfg, mass) + energy_x + switching_cost(t, x, cfg.M, cfg);
    return plan;
  }
  plan.a = xs.decode(best_a);
  plan.planned_worst_cost = best;
  return plan;
}

// Convenience overload optimizing the corner QoS directly.
inline MpcPlan mpc_plan(int t, const OnCounts& x, const Forecast& forecast, const DataCenterConfig& cfg) {
  return mpc_plan(t, x, forecast, cfg, [&](long long, const OnCounts& a) {
    QosResult res = optimize_load_balancing(a, forecast.hi, cfg);
    return res.feasible ? res.cost : std::numeric_limits<double>::infinity();
  });
}

struct MpcStepResult {
  LoadBalancingMatrix Q;
  Money realized_cost = 0.0;
  bool infeasible = false;
};

// Second stage: balance the observed arrivals over the current capacity and
// realize the stage cost with the plan as the switching action.
inline MpcStepResult mpc_step(int t, const State& state, const MpcPlan& plan, const RateVec& observed_lambda,
                              const DataCenterConfig& cfg) {
  MpcStepResult out;
  QosResult qos = optimize_load_balancing(state.x, observed_lambda, cfg);
  out.Q = qos.Q;
  out.infeasible = !qos.feasible;
  double mass = 0.0;
  for (double l : observed_lambda) mass += l;
  double qcost = qos.feasible ? qos.cost : big_m_penalty(cfg, mass);
  out.realized_cost = qcost + energy_idle_cost(t, state.x, cfg) + switching_cost(t, state.x, plan.a, cfg);
  return out;
}

}  // namespace dcc
