#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "dcc/model.hpp"

namespace dcc {

struct TypeAggregation {
  int I = 0;
  std::vector<int> N;                        // per-type totals
  std::vector<std::vector<int>> type_blocks; // per-type member blocks, ascending

  static TypeAggregation from_config(const DataCenterConfig& cfg) {
    TypeAggregation agg;
    agg.I = cfg.I;
    agg.N.assign(cfg.I, 0);
    agg.type_blocks.assign(cfg.I, {});
    for (int b = 0; b < cfg.B; ++b) {
      agg.N[cfg.block_type[b]] += cfg.M[b];
      agg.type_blocks[cfg.block_type[b]].push_back(b);
    }
    return agg;
  }
};

// y_i = sum of x_b over blocks of type i
inline OnCounts aggregate_by_type(const OnCounts& x, const TypeAggregation& agg) {
  OnCounts y(agg.I, 0);
  for (int i = 0; i < agg.I; ++i)
    for (int b : agg.type_blocks[i]) y[i] += x[b];
  return y;
}

// Cheapest x aggregating to y: allocate servers one at a time to the block
// with the smallest marginal energy cost (ties by block index). For linear
// prices this is the ascending-price greedy fill.
inline OnCounts optimal_disaggregation(int t, const OnCounts& y, const TypeAggregation& agg,
                                       const DataCenterConfig& cfg) {
  if (static_cast<int>(y.size()) != agg.I) throw std::domain_error("disaggregation: y has wrong dimension");
  for (int i = 0; i < agg.I; ++i)
    if (y[i] < 0 || y[i] > agg.N[i]) throw std::domain_error("disaggregation: y outside [0, N]");

  OnCounts x(cfg.B, 0);
  for (int i = 0; i < agg.I; ++i) {
    for (int placed = 0; placed < y[i]; ++placed) {
      int best_b = -1;
      double best_marginal = 0.0;
      for (int b : agg.type_blocks[i]) {
        if (x[b] >= cfg.M[b]) continue;
        double marginal = cfg.price.energy(t, b, x[b] + 1) - cfg.price.energy(t, b, x[b]);
        if (best_b < 0 || marginal < best_marginal) {
          best_b = b;
          best_marginal = marginal;
        }
      }
      ++x[best_b];
    }
  }
  return x;
}

enum class AggregationCase { constant_prices, zero_switch_cost };

struct AggregatedModel {
  DataCenterConfig reduced;  // one block per type, M_i = N_i
  TypeAggregation agg;
  AggregationCase kind = AggregationCase::constant_prices;
};

// Reduced MDP over Omega_y. The per-type energy curve tabulates the greedy
// disaggregation cost, so the reduced model prices y exactly as the full
// model prices x*(y). QoS is preserved because blocks of one type share rate
// and serve mask (proportional splitting equalizes block response times).
inline AggregatedModel build_aggregated_model(AggregationCase kind, const DataCenterConfig& cfg) {
  cfg.validate();
  AggregatedModel out;
  out.kind = kind;
  out.agg = TypeAggregation::from_config(cfg);

  int horizon = cfg.price.horizon;
  if (kind == AggregationCase::constant_prices) {
    if (cfg.price.time_varying()) throw std::domain_error("case 1 requires time-constant prices");
    for (int b = 1; b < cfg.B; ++b)
      if (cfg.price.c_plus(0, b) != cfg.price.c_plus(0, 0) || cfg.price.c_minus(0, b) != cfg.price.c_minus(0, 0))
        throw std::domain_error("case 1 requires uniform switching prices");
  } else {
    for (std::size_t t = 0; t < cfg.price.switch_on.size(); ++t)
      for (int b = 0; b < cfg.B; ++b)
        if (cfg.price.c_plus(static_cast<int>(t), b) != 0.0 || cfg.price.c_minus(static_cast<int>(t), b) != 0.0)
          throw std::domain_error("case 2 requires zero switching costs");
  }

  DataCenterConfig& red = out.reduced;
  red.B = cfg.I;
  red.J = cfg.J;
  red.I = cfg.I;
  red.M = out.agg.N;
  red.block_type.resize(cfg.I);
  std::iota(red.block_type.begin(), red.block_type.end(), 0);
  red.r.resize(cfg.I);
  red.C = cfg.C;
  red.serve_mask_.assign(static_cast<std::size_t>(cfg.I) * cfg.J, 0);
  for (int i = 0; i < cfg.I; ++i) {
    int rep = out.agg.type_blocks[i].front();
    red.r[i] = cfg.r[rep];
    for (int j = 0; j < cfg.J; ++j) red.set_serves(i, j, cfg.serves(rep, j));
  }

  PriceSchedule& price = red.price;
  price.horizon = horizon;
  bool stationary_energy = kind == AggregationCase::constant_prices;
  int curve_slots = stationary_energy ? 1 : horizon;
  price.energy_curve.assign(curve_slots, std::vector<std::vector<double>>(cfg.I));
  price.energy_price.assign(1, std::vector<double>(cfg.I, 0.0));  // unused behind the curve
  for (int ts = 0; ts < curve_slots; ++ts)
    for (int i = 0; i < cfg.I; ++i) {
      std::vector<double>& curve = price.energy_curve[ts][i];
      curve.resize(out.agg.N[i] + 1);
      for (int yi = 0; yi <= out.agg.N[i]; ++yi) {
        OnCounts y(cfg.I, 0);
        y[i] = yi;
        OnCounts x = optimal_disaggregation(ts, y, out.agg, cfg);
        double e = 0.0;
        for (int b : out.agg.type_blocks[i]) e += cfg.price.energy(ts, b, x[b]);
        curve[yi] = e;
      }
    }
  if (kind == AggregationCase::constant_prices) {
    price.switch_on.assign(1, std::vector<double>(cfg.I, cfg.price.c_plus(0, 0)));
    price.switch_off.assign(1, std::vector<double>(cfg.I, cfg.price.c_minus(0, 0)));
  } else {
    price.switch_on.assign(1, std::vector<double>(cfg.I, 0.0));
    price.switch_off.assign(1, std::vector<double>(cfg.I, 0.0));
  }
  red.validate();
  return out;
}

}  // namespace dcc
