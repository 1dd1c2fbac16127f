// dcc: solver and simulation toolkit for robust data-center capacity control.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcc/aggregate.hpp"
#include "dcc/ingest.hpp"
#include "dcc/io.hpp"
#include "dcc/mpc.hpp"
#include "dcc/sim.hpp"
#include "dcc/solver.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;

struct Infeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> trace_class_names(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("trace: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trace: empty file " + path);
  std::vector<std::string> names;
  std::stringstream ss(line);
  std::string f;
  bool first = true;
  while (std::getline(ss, f, ',')) {
    if (first) {
      if (f != "timestamp") throw std::runtime_error("trace: header must start with 'timestamp'");
      first = false;
    } else {
      names.push_back(f);
    }
  }
  if (names.empty()) throw std::runtime_error("trace: no class columns");
  return names;
}

// Raise the infeasible-instance flag when even full capacity cannot carry
// some arrival vector in the support.
void require_feasible_at_full_capacity(const dcc::QosTable& qos) {
  for (std::size_t li = 0; li < qos.lambda_support.size(); ++li)
    if (qos.at(qos.xspace.count - 1, li) >= qos.big_m)
      throw Infeasible("instance infeasible: arrival support point " + std::to_string(li) +
                       " exceeds full capacity");
}

dcc::ModeModel apply_robust_flag(const dcc::ModeModel& model, const std::string& robust) {
  if (robust == "off") return model.with_singleton_chain();
  bool want_kl = robust == "kl";
  for (const auto& slot : model.chain)
    for (const auto& set : slot)
      if (std::holds_alternative<dcc::LikelihoodSet>(set) != want_kl)
        throw std::invalid_argument("--robust " + robust + " does not match the model file's uncertainty kind");
  return model;
}

int run(int argc, char** argv) {
  CLI::App app{"robust data-center capacity control toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 42;
  int jobs = 0;
  app.add_option("--seed", seed, "master random seed");
  app.add_option("--jobs", jobs, "parallel workers (0 = all cores)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "estimate a mode model from an arrival trace");
  std::string in_trace, out_model;
  int modes = 3, lambda_levels = 3;
  double confidence = 0.9;
  ingest->add_option("--trace", in_trace, "input trace CSV")->required();
  ingest->add_option("--out", out_model, "output model file")->required();
  ingest->add_option("--modes", modes, "number of hidden modes");
  ingest->add_option("--lambda-levels", lambda_levels, "quantile levels per class and mode");
  ingest->add_option("--confidence", confidence, "chain-row confidence level in [0, 1)");

  // gen-trace
  auto* gen = app.add_subcommand("gen-trace", "sample a synthetic trace from a mode model");
  std::string gen_model, gen_out;
  int gen_slots = 8760;
  gen->add_option("--model", gen_model, "mode model file")->required();
  gen->add_option("--out", gen_out, "output trace CSV")->required();
  gen->add_option("--slots", gen_slots, "trace length");

  // solve
  auto* solve = app.add_subcommand("solve", "compute a threshold policy and value table");
  std::string s_config, s_model, s_out = ".";
  int horizon = 24;
  double gamma = 0.95, tol = 1e-6, mc_eps = 1e-3;
  std::string robust = "interval", aggregate = "none";
  bool infinite = false, mc = false;
  int mc_n = 1000;
  solve->add_option("--config", s_config, "data-center config file")->required();
  solve->add_option("--model", s_model, "mode model file")->required();
  solve->add_option("--out-dir", s_out, "output directory for policy.csv and values.csv");
  solve->add_option("--horizon", horizon, "planning horizon");
  solve->add_option("--gamma", gamma, "discount factor");
  solve->add_option("--robust", robust, "uncertainty handling")->check(CLI::IsMember({"interval", "kl", "off"}));
  solve->add_option("--aggregate", aggregate, "type aggregation")->check(CLI::IsMember({"none", "case1", "case2"}));
  solve->add_flag("--infinite", infinite, "solve the stationary infinite-horizon problem");
  solve->add_option("--tol", tol, "fixed-point tolerance for --infinite");
  solve->add_flag("--mc", mc, "Monte-Carlo threshold search instead of backward induction");
  solve->add_option("--n", mc_n, "rollouts per Monte-Carlo estimate");
  solve->add_option("--eps", mc_eps, "Monte-Carlo sweep stopping tolerance");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "roll out a stored policy");
  std::string m_config, m_model, m_policy, m_stats = "stats.csv", m_traj;
  int runs = 1000, sim_h = 24;
  simulate->add_option("--config", m_config, "data-center config file")->required();
  simulate->add_option("--model", m_model, "mode model file")->required();
  simulate->add_option("--policy", m_policy, "policy CSV from solve")->required();
  simulate->add_option("--runs", runs, "number of runs");
  simulate->add_option("--horizon", sim_h, "slots per run");
  simulate->add_option("--out", m_stats, "statistics CSV");
  simulate->add_option("--traj", m_traj, "also write one trajectory CSV here");

  // compare
  auto* compare = app.add_subcommand("compare", "threshold policy vs MPC baseline");
  std::string c_config, c_model, c_out = "compare.csv", c_policy;
  int c_runs = 1000, c_h = 24;
  double c_gamma = 0.95;
  std::string c_robust = "interval";
  compare->add_option("--config", c_config, "data-center config file")->required();
  compare->add_option("--model", c_model, "mode model file")->required();
  compare->add_option("--out", c_out, "comparison CSV");
  compare->add_option("--runs", c_runs, "number of runs");
  compare->add_option("--horizon", c_h, "slots per run");
  compare->add_option("--gamma", c_gamma, "discount factor for the threshold solve");
  compare->add_option("--robust", c_robust, "uncertainty handling")->check(CLI::IsMember({"interval", "kl", "off"}));
  compare->add_option("--policy", c_policy, "extra custom policy CSV to include");

  // check
  auto* check = app.add_subcommand("check", "run the invariant suite on an instance");
  std::string k_config, k_model;
  int k_h = 4;
  check->add_option("--config", k_config, "data-center config file")->required();
  check->add_option("--model", k_model, "mode model file")->required();
  check->add_option("--horizon", k_h, "horizon for the oracle-equivalence check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*ingest) {
    dcc::TraceSeries trace = dcc::parse_trace(in_trace, trace_class_names(in_trace));
    dcc::Clustering clusters = dcc::cluster_modes(trace, modes, seed);
    dcc::ModeModel model = dcc::estimate_mode_model(trace, clusters.assignments, modes, lambda_levels, confidence);
    dcc::write_mode_model(model, out_model);
    std::cout << "estimated " << modes << " modes, |Lambda| = " << model.support_size()
              << ", kmeans inertia = " << clusters.inertia << "\nwrote " << out_model << '\n';
    return kExitOk;
  }

  if (*gen) {
    dcc::ModeModel model = dcc::parse_mode_model(gen_model);
    dcc::TraceSeries trace = dcc::gen_synthetic_trace(model, gen_slots, seed);
    dcc::write_trace(trace, gen_out);
    std::cout << "wrote " << gen_out << " (" << gen_slots << " slots)\n";
    return kExitOk;
  }

  if (*solve) {
    dcc::LoadedConfig lc = dcc::parse_config(s_config);
    dcc::ModeModel model = apply_robust_flag(dcc::parse_mode_model(s_model), robust);
    dcc::DataCenterConfig cfg = lc.cfg;
    if (aggregate != "none") {
      auto kind = aggregate == "case1" ? dcc::AggregationCase::constant_prices
                                       : dcc::AggregationCase::zero_switch_cost;
      cfg = dcc::build_aggregated_model(kind, cfg).reduced;
    }
    cfg.price.horizon = horizon;

    dcc::XSpace xs(cfg.M);
    dcc::QosTable qos = dcc::build_qos_table(xs, model.lambda_support, cfg, jobs);
    require_feasible_at_full_capacity(qos);

    dcc::SolveOptions opts;
    opts.jobs = jobs;
    std::string policy_path = s_out + "/policy.csv";
    std::string values_path = s_out + "/values.csv";
    if (infinite) {
      dcc::InfiniteResult res = dcc::infinite_horizon_solve(model, cfg, gamma, tol, qos, opts);
      dcc::write_policy_csv(res.policy, policy_path, lc.digest, seed);
      dcc::ValueTable vt;
      vt.num_x = xs.count;
      vt.num_lambda = model.support_size();
      vt.num_modes = model.num_modes;
      vt.h = 1;
      vt.v.assign(1, res.values);
      dcc::write_values_csv(vt, values_path, lc.digest, seed);
      std::cout << "fixed point after " << res.iterations << " iterations (sup change "
                << res.sup_changes.back() << ")\n";
    } else if (mc) {
      dcc::MonteCarloResult res = dcc::monte_carlo_search(model, cfg, gamma, mc_n, mc_eps, seed, qos);
      dcc::write_policy_csv(res.policy, policy_path, lc.digest, seed);
      std::cout << "monte-carlo search: " << res.sweeps << " sweeps, v_hat = " << res.v_hat
                << " (nominal " << res.v_hat_nominal << ")\n";
    } else {
      opts.keep_values = static_cast<double>(xs.count) * model.support_size() * model.num_modes * horizon < 5e7;
      dcc::SolveResult res = dcc::backward_induction(model, cfg, horizon, gamma, qos, opts);
      dcc::write_policy_csv(res.policy, policy_path, lc.digest, seed);
      dcc::write_values_csv(res.values, values_path, lc.digest, seed);
    }
    std::cout << "wrote " << policy_path << '\n';
    return kExitOk;
  }

  if (*simulate) {
    dcc::LoadedConfig lc = dcc::parse_config(m_config);
    dcc::ModeModel model = dcc::parse_mode_model(m_model);
    dcc::ThresholdPolicy policy = dcc::read_policy_csv(m_policy);
    if (policy.B != lc.cfg.B) throw std::invalid_argument("policy block count does not match config");
    dcc::XSpace xs(lc.cfg.M);
    dcc::QosTable qos = dcc::build_qos_table(xs, model.lambda_support, lc.cfg, jobs);
    require_feasible_at_full_capacity(qos);
    dcc::ThresholdSimPolicy sim_policy(policy, xs);
    dcc::BatchStats stats = dcc::run_batch(model, lc.cfg, sim_policy, runs, sim_h, seed, qos, jobs);
    dcc::write_stats_csv(stats, sim_policy.label(), m_stats, lc.digest, seed);
    if (!m_traj.empty()) {
      dcc::Trajectory traj = dcc::sample_trajectory(model, lc.cfg, sim_policy, dcc::default_start(model, qos),
                                                    sim_h, dcc::Rng(seed), qos);
      dcc::write_trajectory_csv(traj, m_traj, lc.digest, seed);
    }
    std::cout << "mean cumulative cost at slot " << sim_h << ": " << stats.mean.back() << "\nwrote " << m_stats
              << '\n';
    return kExitOk;
  }

  if (*compare) {
    dcc::LoadedConfig lc = dcc::parse_config(c_config);
    dcc::ModeModel model = apply_robust_flag(dcc::parse_mode_model(c_model), c_robust);
    dcc::XSpace xs(lc.cfg.M);
    dcc::QosTable qos = dcc::build_qos_table(xs, model.lambda_support, lc.cfg, jobs);
    require_feasible_at_full_capacity(qos);

    dcc::SolveOptions opts;
    opts.jobs = jobs;
    opts.keep_values = false;
    dcc::SolveResult solved = dcc::backward_induction(model, lc.cfg, c_h, c_gamma, qos, opts);
    dcc::ThresholdSimPolicy mdp(solved.policy, xs, "mdp");
    dcc::ModeModel nominal = model.with_singleton_chain();
    dcc::MpcSimPolicy mpc(nominal, lc.cfg, "mpc");

    std::vector<const dcc::SimPolicy*> policies{&mdp, &mpc};
    std::unique_ptr<dcc::ThresholdSimPolicy> custom;
    if (!c_policy.empty()) {
      custom = std::make_unique<dcc::ThresholdSimPolicy>(dcc::read_policy_csv(c_policy), xs, "custom");
      policies.push_back(custom.get());
    }
    dcc::ComparisonReport report = dcc::compare_policies(nominal, lc.cfg, policies, c_runs, c_h, seed, qos, jobs);
    dcc::write_comparison_csv(report, c_out, lc.digest, seed);
    for (std::size_t i = 0; i < report.labels.size(); ++i)
      std::cout << report.labels[i] << " mean cumulative cost at slot " << c_h << ": "
                << report.stats[i].mean.back() << '\n';
    std::cout << "wrote " << c_out << '\n';
    return kExitOk;
  }

  if (*check) {
    dcc::LoadedConfig lc = dcc::parse_config(k_config);
    dcc::ModeModel model = dcc::parse_mode_model(k_model);
    dcc::XSpace xs(lc.cfg.M);
    dcc::QosTable qos = dcc::build_qos_table(xs, model.lambda_support, lc.cfg, jobs);
    require_feasible_at_full_capacity(qos);

    bool ok = true;
    bool qos_convex = dcc::qos_table_axis_convex(qos);
    std::cout << "qos axis-convexity probe: " << (qos_convex ? "convex" : "NOT convex") << '\n';

    double cells = static_cast<double>(xs.count) * xs.count * model.support_size() * model.num_modes * k_h;
    if (cells <= 5e7) {
      dcc::SolveOptions opts;
      opts.jobs = jobs;
      dcc::SolveResult thr = dcc::backward_induction(model, lc.cfg, k_h, 0.95, qos, opts);
      dcc::FlatResult flat = dcc::flat_backward_induction(model, lc.cfg, k_h, 0.95, qos, opts);
      double max_diff = 0.0;
      for (int t = 0; t < k_h; ++t)
        for (std::size_t c = 0; c < thr.values.v[t].size(); ++c)
          max_diff = std::max(max_diff, std::abs(thr.values.v[t][c] - flat.values.v[t][c]));
      bool equal = max_diff <= 1e-9;
      std::cout << "oracle equivalence (max |threshold - flat| = " << max_diff << "): "
                << (equal ? "ok" : "MISMATCH") << '\n';
      if (qos_convex && !equal) ok = false;
      bool vconvex = dcc::values_axis_convex(flat.values, xs, 1e-9, qos.big_m);
      std::cout << "value axis-convexity: " << (vconvex ? "ok" : "NOT convex") << '\n';
      if (qos_convex && !vconvex) ok = false;
    } else {
      std::cout << "oracle equivalence: skipped (state space too large to enumerate)\n";
    }

    // orthant dominance: the matching orthant's signed form attains the max
    dcc::Rng rng(seed);
    bool dom_ok = true;
    for (int trial = 0; trial < 200 && dom_ok; ++trial) {
      dcc::OnCounts x = xs.decode(static_cast<long long>(rng.next_below(static_cast<std::uint64_t>(xs.count))));
      dcc::OnCounts a = xs.decode(static_cast<long long>(rng.next_below(static_cast<std::uint64_t>(xs.count))));
      double sw = dcc::switching_cost(0, x, a, lc.cfg);
      double best = -std::numeric_limits<double>::infinity();
      for (int ki = 0; ki < dcc::num_orthants(lc.cfg.B); ++ki) {
        double f = dcc::signed_switch_form(0, dcc::orthant_vector(ki, lc.cfg.B), x, a, lc.cfg);
        if (f > sw + 1e-9) dom_ok = false;
        best = std::max(best, f);
      }
      if (std::abs(best - sw) > 1e-9) dom_ok = false;
    }
    std::cout << "orthant dominance (200 sampled (x, a) pairs): " << (dom_ok ? "ok" : "VIOLATED") << '\n';
    if (!dom_ok) ok = false;

    if (!ok) {
      std::cout << "check: FAILED\n";
      return kExitValidation;
    }
    std::cout << "check: ok\n";
    return kExitOk;
  }

  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Infeasible& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}
