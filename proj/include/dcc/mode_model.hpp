#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dcc/common.hpp"
#include "dcc/uncertainty.hpp"

namespace dcc {

// Hidden-mode dynamics: a Markov chain over modes theta with per-row
// uncertainty sets, plus per-mode categorical emissions over a finite
// arrival-rate support Lambda.
struct ModeModel {
  int num_modes = 0;
  std::vector<RateVec> lambda_support;             // |Lambda| vectors of dim J
  std::vector<std::vector<double>> emission;       // [theta][lambda_idx]
  std::vector<std::vector<UncertaintySet>> chain;  // [t][theta]; one row when stationary

  bool stationary() const { return chain.size() == 1; }

  const UncertaintySet& chain_at(int t, int theta) const {
    std::size_t ti = chain.size() == 1 ? 0 : static_cast<std::size_t>(std::min<int>(std::max(t, 0), static_cast<int>(chain.size()) - 1));
    return chain[ti][theta];
  }

  const std::vector<double>& nominal_chain_row(int t, int theta) const { return nominal_row(chain_at(t, theta)); }

  std::size_t support_size() const { return lambda_support.size(); }

  void validate() const {
    if (num_modes <= 0) throw std::invalid_argument("mode model: num_modes must be positive");
    if (lambda_support.empty()) throw std::invalid_argument("mode model: empty lambda support");
    std::size_t J = lambda_support.front().size();
    for (const auto& lam : lambda_support) {
      if (lam.size() != J) throw std::invalid_argument("mode model: ragged lambda support");
      for (double l : lam)
        if (l < 0.0) throw std::invalid_argument("mode model: negative arrival rate");
    }
    if (static_cast<int>(emission.size()) != num_modes) throw std::invalid_argument("mode model: emission rows != num_modes");
    for (const auto& row : emission) {
      if (row.size() != lambda_support.size()) throw std::invalid_argument("mode model: emission row size mismatch");
      double s = 0.0;
      for (double p : row) {
        if (p < 0.0) throw std::invalid_argument("mode model: negative emission probability");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("mode model: emission row must sum to 1");
    }
    if (chain.empty()) throw std::invalid_argument("mode model: missing chain");
    for (const auto& slot : chain) {
      if (static_cast<int>(slot.size()) != num_modes) throw std::invalid_argument("mode model: chain row count mismatch");
      for (const auto& set : slot) {
        if (std::holds_alternative<IntervalSet>(set))
          std::get<IntervalSet>(set).validate();
        else
          std::get<LikelihoodSet>(set).validate();
        if (nominal_row(set).size() != static_cast<std::size_t>(num_modes))
          throw std::invalid_argument("mode model: chain row dimension mismatch");
      }
    }
  }

  ModeModel with_singleton_chain() const {
    ModeModel m = *this;
    for (auto& slot : m.chain)
      for (auto& set : slot) set = as_singleton(set);
    return m;
  }

  ModeModel widened_chain(double delta) const {
    ModeModel m = *this;
    for (auto& slot : m.chain)
      for (auto& set : slot) set = widened(set, delta);
    return m;
  }

  // stationary distribution of the nominal chain (power iteration)
  std::vector<double> nominal_stationary() const {
    std::vector<double> pi(num_modes, 1.0 / num_modes);
    for (int it = 0; it < 10000; ++it) {
      std::vector<double> next(num_modes, 0.0);
      for (int th = 0; th < num_modes; ++th) {
        const auto& row = nominal_chain_row(0, th);
        for (int th2 = 0; th2 < num_modes; ++th2) next[th2] += pi[th] * row[th2];
      }
      double diff = 0.0;
      for (int th = 0; th < num_modes; ++th) diff = std::max(diff, std::abs(next[th] - pi[th]));
      pi = std::move(next);
      if (diff < 1e-14) break;
    }
    return pi;
  }
};

}  // namespace dcc
