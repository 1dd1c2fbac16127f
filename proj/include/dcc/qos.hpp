#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "dcc/common.hpp"
#include "dcc/model.hpp"

namespace dcc {

// Column-stochastic B x J traffic split; column j distributes class-j jobs.
struct LoadBalancingMatrix {
  int B = 0, J = 0;
  std::vector<double> q;  // row-major

  LoadBalancingMatrix() = default;
  LoadBalancingMatrix(int blocks, int classes) : B(blocks), J(classes), q(static_cast<std::size_t>(blocks) * classes, 0.0) {}

  double at(int b, int j) const { return q[static_cast<std::size_t>(b) * J + j]; }
  double& at(int b, int j) { return q[static_cast<std::size_t>(b) * J + j]; }

  bool column_stochastic(double tol = 1e-9) const {
    for (int j = 0; j < J; ++j) {
      double s = 0.0;
      for (int b = 0; b < B; ++b) s += at(b, j);
      if (std::abs(s - 1.0) > tol) return false;
    }
    return true;
  }
};

struct QosResult {
  Money cost = 0.0;
  LoadBalancingMatrix Q;
  bool feasible = false;
};

// lambda^S = Q * lambda
inline RateVec block_rates(const LoadBalancingMatrix& Q, const RateVec& lambda) {
  RateVec out(Q.B, 0.0);
  for (int b = 0; b < Q.B; ++b)
    for (int j = 0; j < Q.J; ++j) out[b] += Q.at(b, j) * lambda[j];
  return out;
}

// x_b / (r_b x_b - lambda^S_b); nullopt when the stability condition fails.
inline std::optional<double> block_response_time(int x_b, double r_b, double lamS_b) {
  double capacity = r_b * x_b;
  if (capacity <= lamS_b) return std::nullopt;
  return x_b / (capacity - lamS_b);
}

// sum_j C_j lambda_j (Q^T d^S)_j; nullopt when any loaded block is unstable.
inline std::optional<Money> qos_cost_given_Q(const OnCounts& x, const RateVec& lambda,
                                             const LoadBalancingMatrix& Q, const DataCenterConfig& cfg) {
  RateVec lamS = block_rates(Q, lambda);
  std::vector<double> dS(cfg.B, 0.0);
  for (int b = 0; b < cfg.B; ++b) {
    if (lamS[b] <= 0.0 && x[b] == 0) continue;  // unused empty block
    auto d = block_response_time(x[b], cfg.r[b], lamS[b]);
    if (!d) {
      if (lamS[b] > 0.0) return std::nullopt;
      continue;  // x_b = 0 with no traffic
    }
    dS[b] = *d;
  }
  Money cost = 0.0;
  for (int j = 0; j < cfg.J; ++j) {
    if (lambda[j] == 0.0) continue;
    double dj = 0.0;
    for (int b = 0; b < cfg.B; ++b) dj += Q.at(b, j) * dS[b];
    cost += cfg.C[j] * lambda[j] * dj;
  }
  return cost;
}

struct QosOptions {
  double tol_q = 1e-6;  // relative objective change
  int max_iters = 10000;
  int restarts = 5;
  std::uint64_t seed = 1234577ULL;  // restart randomization
};

namespace detail {

// Max-flow (Edmonds-Karp on a tiny dense graph) deciding whether the class
// loads can be routed into block capacities under the serve mask.
inline double route_flow(const std::vector<double>& supply, const std::vector<double>& capacity,
                         const DataCenterConfig& cfg, std::vector<std::vector<double>>* flow_out) {
  int J = cfg.J, B = cfg.B;
  int n = J + B + 2, src = J + B, dst = J + B + 1;
  std::vector<std::vector<double>> cap(n, std::vector<double>(n, 0.0));
  for (int j = 0; j < J; ++j) cap[src][j] = supply[j];
  for (int b = 0; b < B; ++b) cap[J + b][dst] = capacity[b];
  for (int j = 0; j < J; ++j)
    for (int b = 0; b < B; ++b)
      if (cfg.serves(b, j)) cap[j][J + b] = std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (;;) {
    std::vector<int> parent(n, -1);
    parent[src] = src;
    std::queue<int> bfs;
    bfs.push(src);
    while (!bfs.empty() && parent[dst] < 0) {
      int u = bfs.front();
      bfs.pop();
      for (int v = 0; v < n; ++v)
        if (parent[v] < 0 && cap[u][v] > 1e-15) {
          parent[v] = u;
          bfs.push(v);
        }
    }
    if (parent[dst] < 0) break;
    double aug = std::numeric_limits<double>::infinity();
    for (int v = dst; v != src; v = parent[v]) aug = std::min(aug, cap[parent[v]][v]);
    for (int v = dst; v != src; v = parent[v]) {
      cap[parent[v]][v] -= aug;
      cap[v][parent[v]] += aug;
    }
    total += aug;
  }
  if (flow_out) {
    flow_out->assign(B, std::vector<double>(J, 0.0));
    for (int j = 0; j < J; ++j)
      for (int b = 0; b < B; ++b)
        if (cfg.serves(b, j)) (*flow_out)[b][j] = cap[J + b][j];  // residual on reverse edge = flow
  }
  return total;
}

// Euclidean projection of column j onto the simplex restricted to allowed blocks.
inline void project_column(LoadBalancingMatrix& Q, int j, const std::vector<std::uint8_t>& allowed) {
  std::vector<int> idx;
  for (int b = 0; b < Q.B; ++b)
    if (allowed[static_cast<std::size_t>(b) * Q.J + j]) idx.push_back(b);
  std::vector<double> v;
  v.reserve(idx.size());
  for (int b : idx) v.push_back(Q.at(b, j));
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int rho = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) {
      rho = static_cast<int>(i + 1);
      theta = t;
    }
  }
  for (int b = 0; b < Q.B; ++b) Q.at(b, j) = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) Q.at(idx[i], j) = std::max(0.0, v[i] - theta);
}

}  // namespace detail

// min over feasible Q of the total QoS cost. Infeasibility is a result, not
// an error. Projected gradient descent on the product of per-class simplices;
// iterates that break the stability margin are pulled back by backtracking.
inline QosResult optimize_load_balancing(const OnCounts& x, const RateVec& lambda, const DataCenterConfig& cfg,
                                         const QosOptions& opts = {}) {
  QosResult out;
  out.Q = LoadBalancingMatrix(cfg.B, cfg.J);

  double total_lambda = 0.0;
  for (double l : lambda) total_lambda += l;
  if (total_lambda <= 0.0) {
    // no traffic: any allowed Q works, zero cost
    for (int j = 0; j < cfg.J; ++j)
      for (int b = 0; b < cfg.B; ++b)
        if (cfg.serves(b, j)) {
          out.Q.at(b, j) = 1.0;
          break;
        }
    out.cost = 0.0;
    out.feasible = true;
    return out;
  }

  double max_cap = 0.0;
  for (int b = 0; b < cfg.B; ++b) max_cap = std::max(max_cap, cfg.r[b] * cfg.M[b]);
  const double eps_stab = 1e-9 * max_cap;

  // feasibility + starting point via routing with shrunk capacities
  std::vector<double> capacity(cfg.B);
  for (int b = 0; b < cfg.B; ++b) capacity[b] = std::max(0.0, cfg.r[b] * x[b] - eps_stab) * (1.0 - 1e-9);
  std::vector<std::vector<double>> flow;
  double routed = detail::route_flow(lambda, capacity, cfg, &flow);
  if (routed < total_lambda - 1e-9 * std::max(1.0, total_lambda)) {
    out.feasible = false;
    out.cost = std::numeric_limits<double>::infinity();
    return out;
  }

  // blocks with x_b = 0 are excluded from the decision variables
  std::vector<std::uint8_t> allowed(static_cast<std::size_t>(cfg.B) * cfg.J, 0);
  for (int b = 0; b < cfg.B; ++b)
    for (int j = 0; j < cfg.J; ++j) allowed[static_cast<std::size_t>(b) * cfg.J + j] = cfg.serves(b, j) && x[b] > 0;

  LoadBalancingMatrix q0(cfg.B, cfg.J);
  for (int j = 0; j < cfg.J; ++j) {
    if (lambda[j] > 0.0) {
      for (int b = 0; b < cfg.B; ++b) q0.at(b, j) = flow[b][j] / lambda[j];
      // renormalize routing rounding
      double s = 0.0;
      for (int b = 0; b < cfg.B; ++b) s += q0.at(b, j);
      for (int b = 0; b < cfg.B; ++b) q0.at(b, j) /= s;
    } else {
      for (int b = 0; b < cfg.B; ++b)
        if (allowed[static_cast<std::size_t>(b) * cfg.J + j]) {
          q0.at(b, j) = 1.0;
          break;
        }
    }
  }

  auto stable = [&](const LoadBalancingMatrix& Q) {
    RateVec lamS = block_rates(Q, lambda);
    for (int b = 0; b < cfg.B; ++b)
      if (lamS[b] > cfg.r[b] * x[b] - eps_stab && lamS[b] > 0.0) return false;
    return true;
  };
  auto objective = [&](const LoadBalancingMatrix& Q) {
    auto c = qos_cost_given_Q(x, lambda, Q, cfg);
    return c ? *c : std::numeric_limits<double>::infinity();
  };
  auto gradient = [&](const LoadBalancingMatrix& Q, LoadBalancingMatrix& G) {
    RateVec lamS = block_rates(Q, lambda);
    for (int b = 0; b < cfg.B; ++b) {
      double cap = cfg.r[b] * x[b];
      double dS = x[b] > 0 ? x[b] / (cap - lamS[b]) : 0.0;
      double dS_prime = x[b] > 0 ? x[b] / ((cap - lamS[b]) * (cap - lamS[b])) : 0.0;
      double w = 0.0;
      for (int j = 0; j < cfg.J; ++j) w += cfg.C[j] * lambda[j] * Q.at(b, j);
      for (int j = 0; j < cfg.J; ++j)
        G.at(b, j) = allowed[static_cast<std::size_t>(b) * cfg.J + j]
                         ? cfg.C[j] * lambda[j] * dS + w * dS_prime * lambda[j]
                         : 0.0;
    }
  };

  double best = std::numeric_limits<double>::infinity();
  LoadBalancingMatrix best_Q = q0;
  int restarts = std::max(1, opts.restarts);
  Rng restart_rng(opts.seed);
  for (int rs = 0; rs < restarts; ++rs) {
    LoadBalancingMatrix Q = q0;
    if (rs > 0) {
      // random allowed point blended toward the feasible start until stable
      LoadBalancingMatrix R(cfg.B, cfg.J);
      for (int j = 0; j < cfg.J; ++j) {
        double s = 0.0;
        for (int b = 0; b < cfg.B; ++b)
          if (allowed[static_cast<std::size_t>(b) * cfg.J + j]) {
            R.at(b, j) = restart_rng.next_double() + 1e-6;
            s += R.at(b, j);
          }
        for (int b = 0; b < cfg.B; ++b) R.at(b, j) /= s;
      }
      double alpha = 1.0;
      while (alpha > 1e-4) {
        LoadBalancingMatrix M2(cfg.B, cfg.J);
        for (std::size_t i = 0; i < Q.q.size(); ++i) M2.q[i] = alpha * R.q[i] + (1.0 - alpha) * q0.q[i];
        if (stable(M2)) {
          Q = M2;
          break;
        }
        alpha *= 0.5;
      }
    }
    double f = objective(Q);
    double step = 0.1;
    LoadBalancingMatrix G(cfg.B, cfg.J);
    for (int it = 0; it < opts.max_iters; ++it) {
      gradient(Q, G);
      double gn = 0.0;
      for (double g : G.q) gn = std::max(gn, std::abs(g));
      if (gn == 0.0) break;
      double s = step / gn;
      LoadBalancingMatrix cand = Q;
      bool improved = false;
      for (int bt = 0; bt < 40; ++bt) {
        for (std::size_t i = 0; i < Q.q.size(); ++i) cand.q[i] = Q.q[i] - s * G.q[i];
        for (int j = 0; j < cfg.J; ++j) detail::project_column(cand, j, allowed);
        if (stable(cand)) {
          double fc = objective(cand);
          if (fc <= f) {
            double rel = std::abs(f - fc) / std::max(1.0, std::abs(f));
            Q = cand;
            f = fc;
            improved = true;
            if (rel < opts.tol_q) it = opts.max_iters;  // converged
            break;
          }
        }
        s *= 0.5;
      }
      if (!improved) break;
    }
    if (f < best) {
      best = f;
      best_Q = Q;
    }
  }

  out.Q = best_Q;
  out.cost = best;
  out.feasible = std::isfinite(best);
  return out;
}

// Finite penalty standing in for infinite cost on capacity-infeasible cells;
// dominates any feasible trajectory cost.
inline Money big_m_penalty(const DataCenterConfig& cfg, double max_lambda_mass) {
  double max_c = 0.0;
  for (double c : cfg.C) max_c = std::max(max_c, c);
  return 1e6 * std::max(1.0, max_c) * std::max(1.0, max_lambda_mass) * std::max(1, cfg.price.horizon);
}

// Enumeration of the on-count box [0, M] with mixed-radix indexing; index 0
// is the all-zero vector and ascending index order is lexicographic in x.
struct XSpace {
  std::vector<int> M;
  long long count = 1;

  explicit XSpace(std::vector<int> m) : M(std::move(m)) {
    for (int mb : M) count *= (mb + 1);
  }

  long long index(const OnCounts& x) const {
    long long i = 0;
    for (std::size_t b = 0; b < M.size(); ++b) i = i * (M[b] + 1) + x[b];
    return i;
  }

  OnCounts decode(long long i) const {
    OnCounts x(M.size());
    for (std::size_t b = M.size(); b-- > 0;) {
      x[b] = static_cast<int>(i % (M[b] + 1));
      i /= (M[b] + 1);
    }
    return x;
  }
};

// Memoized c_qos over Omega_x x Lambda; infeasible cells carry big-M.
struct QosTable {
  XSpace xspace;
  std::vector<RateVec> lambda_support;
  std::vector<double> cells;  // [x_idx * |Lambda| + lambda_idx]
  Money big_m = 0.0;

  double at(long long x_idx, std::size_t lambda_idx) const {
    return cells[static_cast<std::size_t>(x_idx) * lambda_support.size() + lambda_idx];
  }
};

inline QosTable build_qos_table(const XSpace& xspace, const std::vector<RateVec>& lambda_support,
                                const DataCenterConfig& cfg, int jobs = 0) {
  QosTable table{xspace, lambda_support, {}, 0.0};
  double max_mass = 0.0;
  for (const auto& lam : lambda_support) {
    double m = 0.0;
    for (double l : lam) m += l;
    max_mass = std::max(max_mass, m);
  }
  table.big_m = big_m_penalty(cfg, max_mass);
  std::size_t n = static_cast<std::size_t>(xspace.count) * lambda_support.size();
  table.cells.assign(n, 0.0);
  parallel_for(n, jobs, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      long long xi = static_cast<long long>(i / lambda_support.size());
      std::size_t li = i % lambda_support.size();
      OnCounts x = xspace.decode(xi);
      QosResult res = optimize_load_balancing(x, lambda_support[li], cfg);
      table.cells[i] = res.feasible ? res.cost : table.big_m;
    }
  });
  return table;
}

}  // namespace dcc
