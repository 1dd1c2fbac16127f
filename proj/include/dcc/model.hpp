#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcc/common.hpp"

namespace dcc {

// Per-slot, per-block prices. Slots past the schedule horizon clamp to the
// last defined slot. Idle energy defaults to the linear form E(t,b)*x; a
// tabulated convex curve e_b(t, x) may be supplied instead.
struct PriceSchedule {
  int horizon = 1;
  std::vector<std::vector<double>> energy_price;  // [t][b]
  std::vector<std::vector<double>> switch_on;     // [t][b]
  std::vector<std::vector<double>> switch_off;    // [t][b]
  // optional: [t][b][x], x = 0..M_b; outer size 1 means time-invariant curves
  std::vector<std::vector<std::vector<double>>> energy_curve;

  static PriceSchedule stationary(int horizon, std::vector<double> energy,
                                  std::vector<double> c_plus, std::vector<double> c_minus) {
    PriceSchedule p;
    p.horizon = horizon;
    p.energy_price.assign(1, std::move(energy));
    p.switch_on.assign(1, std::move(c_plus));
    p.switch_off.assign(1, std::move(c_minus));
    return p;
  }

  static PriceSchedule uniform(int horizon, int blocks, double energy, double c_plus, double c_minus) {
    return stationary(horizon, std::vector<double>(blocks, energy),
                      std::vector<double>(blocks, c_plus), std::vector<double>(blocks, c_minus));
  }

  int clamp_slot(int t, std::size_t rows) const {
    if (rows == 1) return 0;
    if (t < 0) return 0;
    return t < static_cast<int>(rows) ? t : static_cast<int>(rows) - 1;
  }

  double energy_rate(int t, int b) const { return energy_price[clamp_slot(t, energy_price.size())][b]; }
  double c_plus(int t, int b) const { return switch_on[clamp_slot(t, switch_on.size())][b]; }
  double c_minus(int t, int b) const { return switch_off[clamp_slot(t, switch_off.size())][b]; }

  bool has_curve() const { return !energy_curve.empty(); }

  // e_b(t, x)
  double energy(int t, int b, int x) const {
    if (has_curve()) {
      const auto& curves = energy_curve[clamp_slot(t, energy_curve.size())];
      return curves[b][static_cast<std::size_t>(x)];
    }
    return energy_rate(t, b) * x;
  }

  bool time_varying() const {
    auto varies = [](const auto& rows) {
      for (std::size_t t = 1; t < rows.size(); ++t)
        if (rows[t] != rows[0]) return true;
      return false;
    };
    return varies(energy_price) || varies(switch_on) || varies(switch_off) || varies(energy_curve);
  }
};

struct DataCenterConfig {
  int B = 0;  // server blocks
  int J = 0;  // job classes
  int I = 0;  // server types
  std::vector<int> M;                     // servers per block
  std::vector<int> block_type;            // type index in [0, I)
  std::vector<double> r;                  // per-block processing rate
  std::vector<std::uint8_t> serve_mask_;  // B*J, row-major
  std::vector<double> C;                  // per-class QoS weight
  PriceSchedule price;

  bool serves(int b, int j) const { return serve_mask_[static_cast<std::size_t>(b) * J + j] != 0; }
  void set_serves(int b, int j, bool v) { serve_mask_[static_cast<std::size_t>(b) * J + j] = v ? 1 : 0; }

  int total_servers() const { return std::accumulate(M.begin(), M.end(), 0); }

  void validate() const {
    if (B <= 0 || J <= 0 || I <= 0) throw std::invalid_argument("config: B, J, I must be positive");
    if (I > B) throw std::invalid_argument("config: more server types than blocks");
    if (static_cast<int>(M.size()) != B || static_cast<int>(block_type.size()) != B ||
        static_cast<int>(r.size()) != B || static_cast<int>(C.size()) != J ||
        serve_mask_.size() != static_cast<std::size_t>(B) * J)
      throw std::invalid_argument("config: field dimensions disagree");
    for (int b = 0; b < B; ++b) {
      if (M[b] <= 0) throw std::invalid_argument("config: M must be positive");
      if (r[b] <= 0.0) throw std::invalid_argument("config: r must be positive");
      if (block_type[b] < 0 || block_type[b] >= I) throw std::invalid_argument("config: block_type out of range");
    }
    for (double c : C)
      if (c < 0.0) throw std::invalid_argument("config: C must be nonnegative");
    for (int j = 0; j < J; ++j) {
      bool any = false;
      for (int b = 0; b < B; ++b) any = any || serves(b, j);
      if (!any) throw std::invalid_argument("config: job class " + std::to_string(j) + " has no serving block");
    }
    // a type is homogeneous: same rate and serve row
    for (int b = 0; b < B; ++b)
      for (int b2 = b + 1; b2 < B; ++b2) {
        if (block_type[b] != block_type[b2]) continue;
        if (r[b] != r[b2]) throw std::invalid_argument("config: blocks of one type must share r");
        for (int j = 0; j < J; ++j)
          if (serves(b, j) != serves(b2, j))
            throw std::invalid_argument("config: blocks of one type must share serve_mask");
      }
    auto check_rows = [&](const std::vector<std::vector<double>>& rows, const char* name) {
      for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != B) throw std::invalid_argument(std::string("config: bad ") + name + " row size");
        for (double v : row)
          if (v < 0.0) throw std::invalid_argument(std::string("config: negative ") + name);
      }
    };
    check_rows(price.energy_price, "energy price");
    check_rows(price.switch_on, "switch-on cost");
    check_rows(price.switch_off, "switch-off cost");
    if (price.horizon < 1) throw std::invalid_argument("config: price horizon must be >= 1");
  }
};

struct State {
  OnCounts x;
  RateVec lambda;
  int theta = 0;
};

using Action = OnCounts;

inline bool within_box(const OnCounts& x, const std::vector<int>& M) {
  if (x.size() != M.size()) return false;
  for (std::size_t b = 0; b < x.size(); ++b)
    if (x[b] < 0 || x[b] > M[b]) return false;
  return true;
}

inline void require_box(const OnCounts& x, const DataCenterConfig& cfg, const char* what) {
  if (!within_box(x, cfg.M)) throw std::domain_error(std::string(what) + " outside [0, M]");
}

// sum_b e_b(t, x_b)
inline Money energy_idle_cost(int t, const OnCounts& x, const DataCenterConfig& cfg) {
  require_box(x, cfg, "x");
  Money total = 0.0;
  for (int b = 0; b < cfg.B; ++b) total += cfg.price.energy(t, b, x[b]);
  return total;
}

// sum_b c+_b(t)|a_b - x_b|+ + c-_b(t)|x_b - a_b|+
inline Money switching_cost(int t, const OnCounts& x, const Action& a, const DataCenterConfig& cfg) {
  require_box(x, cfg, "x");
  require_box(a, cfg, "a");
  Money total = 0.0;
  for (int b = 0; b < cfg.B; ++b) {
    int d = a[b] - x[b];
    if (d > 0)
      total += cfg.price.c_plus(t, b) * d;
    else
      total -= cfg.price.c_minus(t, b) * d;
  }
  return total;
}

// Signed (orthant-linear) rewriting of the switching cost. Equals
// switching_cost when k matches sign(a - x) componentwise, never exceeds it.
inline Money signed_switch_form(int t, const std::vector<int>& k, const OnCounts& x, const Action& a,
                                const DataCenterConfig& cfg) {
  if (static_cast<int>(k.size()) != cfg.B) throw std::domain_error("orthant index has wrong dimension");
  for (int kb : k)
    if (kb != -1 && kb != 1) throw std::domain_error("orthant index entries must be -1 or +1");
  require_box(x, cfg, "x");
  require_box(a, cfg, "a");
  Money total = 0.0;
  for (int b = 0; b < cfg.B; ++b) {
    double up = (1 + k[b]) / 2.0;
    double down = (1 - k[b]) / 2.0;
    total += up * cfg.price.c_plus(t, b) * (a[b] - x[b]) + down * cfg.price.c_minus(t, b) * (x[b] - a[b]);
  }
  return total;
}

// c_t((x,lambda,theta), a) = c_qos(x, lambda) + energy + switching.
// The QoS evaluator is injected so that cached tables and direct
// optimization are interchangeable.
template <typename QosFn>
inline Money stage_cost(int t, const State& s, const Action& a, const DataCenterConfig& cfg, QosFn&& qos) {
  return qos(s.x, s.lambda) + energy_idle_cost(t, s.x, cfg) + switching_cost(t, s.x, a, cfg);
}

}  // namespace dcc
