#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcc/common.hpp"
#include "dcc/mode_model.hpp"
#include "dcc/model.hpp"
#include "dcc/sim.hpp"
#include "dcc/solver.hpp"

namespace dcc {

inline constexpr const char* kToolVersion = "1.0.0";

namespace detail {

// Section/key text format: `[section]` headers, `key = v1 v2 ...` entries,
// `#` comments. Repeated keys append rows (used for per-slot price rows and
// per-mode chain rows).
struct TextSections {
  std::map<std::string, std::map<std::string, std::vector<std::vector<std::string>>>> data;

  bool has(const std::string& sec, const std::string& key) const {
    auto s = data.find(sec);
    return s != data.end() && s->second.count(key) > 0;
  }
  const std::vector<std::vector<std::string>>& rows(const std::string& sec, const std::string& key) const {
    auto s = data.find(sec);
    if (s == data.end()) throw std::runtime_error("config: missing section [" + sec + "]");
    auto k = s->second.find(key);
    if (k == s->second.end()) throw std::runtime_error("config: missing key '" + key + "' in [" + sec + "]");
    return k->second;
  }
  const std::vector<std::string>& row(const std::string& sec, const std::string& key) const {
    const auto& r = rows(sec, key);
    if (r.size() != 1) throw std::runtime_error("config: key '" + key + "' in [" + sec + "] must appear once");
    return r[0];
  }
};

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline TextSections parse_sections(std::istream& in, const std::string& what) {
  TextSections out;
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw std::runtime_error(what + ": bad section at line " + std::to_string(line_no));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos || section.empty())
      throw std::runtime_error(what + ": expected 'key = values' at line " + std::to_string(line_no));
    std::string key = trim(line.substr(0, eq));
    std::stringstream vs(line.substr(eq + 1));
    std::vector<std::string> values;
    std::string tok;
    while (vs >> tok) values.push_back(tok);
    out.data[section][key].push_back(std::move(values));
  }
  return out;
}

inline double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(what + ": bad number '" + s + "'");
  }
}

inline int to_int(const std::string& s, const std::string& what) {
  double v = to_double(s, what);
  int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) throw std::runtime_error(what + ": expected integer, got '" + s + "'");
  return i;
}

inline std::vector<double> to_doubles(const std::vector<std::string>& row, const std::string& what) {
  std::vector<double> out;
  out.reserve(row.size());
  for (const auto& s : row) out.push_back(to_double(s, what));
  return out;
}

inline std::vector<int> to_ints(const std::vector<std::string>& row, const std::string& what) {
  std::vector<int> out;
  out.reserve(row.size());
  for (const auto& s : row) out.push_back(to_int(s, what));
  return out;
}

inline std::string read_file(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(what + ": cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

struct LoadedConfig {
  DataCenterConfig cfg;
  std::vector<std::string> class_names;
  std::uint64_t digest = 0;  // of the raw file bytes
};

// Sections: [blocks] (M, block_type, r, serve_mask row per block),
// [classes] (C, optional names), [prices] (horizon, E, c_plus, c_minus;
// repeated rows give per-slot prices).
inline LoadedConfig parse_config(const std::string& path) {
  std::string raw = detail::read_file(path, "config");
  std::istringstream in(raw);
  detail::TextSections sec = detail::parse_sections(in, "config");

  LoadedConfig out;
  out.digest = fnv1a(raw);
  DataCenterConfig& cfg = out.cfg;

  cfg.M = detail::to_ints(sec.row("blocks", "M"), "config M");
  cfg.B = static_cast<int>(cfg.M.size());
  cfg.block_type = sec.has("blocks", "block_type")
                       ? detail::to_ints(sec.row("blocks", "block_type"), "config block_type")
                       : [&] {
                           std::vector<int> t(cfg.B);
                           for (int b = 0; b < cfg.B; ++b) t[b] = b;
                           return t;
                         }();
  cfg.I = 0;
  for (int t : cfg.block_type) cfg.I = std::max(cfg.I, t + 1);
  cfg.r = detail::to_doubles(sec.row("blocks", "r"), "config r");

  cfg.C = detail::to_doubles(sec.row("classes", "C"), "config C");
  cfg.J = static_cast<int>(cfg.C.size());
  if (sec.has("classes", "names")) {
    out.class_names = sec.row("classes", "names");
    if (static_cast<int>(out.class_names.size()) != cfg.J)
      throw std::runtime_error("config: names/C length mismatch");
  } else {
    for (int j = 0; j < cfg.J; ++j) out.class_names.push_back("class" + std::to_string(j + 1));
  }

  const auto& mask_rows = sec.rows("blocks", "serve_mask");
  if (static_cast<int>(mask_rows.size()) != cfg.B)
    throw std::runtime_error("config: serve_mask needs one row per block");
  cfg.serve_mask_.assign(static_cast<std::size_t>(cfg.B) * cfg.J, 0);
  for (int b = 0; b < cfg.B; ++b) {
    std::vector<int> row = detail::to_ints(mask_rows[b], "config serve_mask");
    if (static_cast<int>(row.size()) != cfg.J) throw std::runtime_error("config: serve_mask row width mismatch");
    for (int j = 0; j < cfg.J; ++j) cfg.set_serves(b, j, row[j] != 0);
  }

  cfg.price.horizon = detail::to_int(sec.row("prices", "horizon").at(0), "config horizon");
  auto rows_of = [&](const char* key) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : sec.rows("prices", key)) rows.push_back(detail::to_doubles(r, std::string("config ") + key));
    return rows;
  };
  cfg.price.energy_price = rows_of("E");
  cfg.price.switch_on = rows_of("c_plus");
  cfg.price.switch_off = rows_of("c_minus");

  cfg.validate();
  return out;
}

inline void write_config(const LoadedConfig& lc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out.precision(17);
  const DataCenterConfig& cfg = lc.cfg;
  out << "[blocks]\nM =";
  for (int m : cfg.M) out << ' ' << m;
  out << "\nblock_type =";
  for (int t : cfg.block_type) out << ' ' << t;
  out << "\nr =";
  for (double r : cfg.r) out << ' ' << r;
  out << '\n';
  for (int b = 0; b < cfg.B; ++b) {
    out << "serve_mask =";
    for (int j = 0; j < cfg.J; ++j) out << ' ' << (cfg.serves(b, j) ? 1 : 0);
    out << '\n';
  }
  out << "\n[classes]\nC =";
  for (double c : cfg.C) out << ' ' << c;
  out << "\nnames =";
  for (const auto& n : lc.class_names) out << ' ' << n;
  out << "\n\n[prices]\nhorizon = " << cfg.price.horizon << '\n';
  auto emit = [&](const char* key, const std::vector<std::vector<double>>& rows) {
    for (const auto& row : rows) {
      out << key << " =";
      for (double v : row) out << ' ' << v;
      out << '\n';
    }
  };
  emit("E", cfg.price.energy_price);
  emit("c_plus", cfg.price.switch_on);
  emit("c_minus", cfg.price.switch_off);
}

// Sections: [chain] (num_modes, kind, row per (slot, theta)), [intervals]
// (lo/hi rows matching chain rows, or radius values for the KL kind),
// [lambda_support] (lambda row per support point), [emission] (row per mode).
inline ModeModel parse_mode_model(const std::string& path) {
  std::string raw = detail::read_file(path, "model");
  std::istringstream in(raw);
  detail::TextSections sec = detail::parse_sections(in, "model");

  ModeModel model;
  model.num_modes = detail::to_int(sec.row("chain", "num_modes").at(0), "model num_modes");
  std::string kind = sec.has("chain", "kind") ? sec.row("chain", "kind").at(0) : "interval";
  if (kind != "interval" && kind != "kl") throw std::runtime_error("model: kind must be interval or kl");

  const auto& chain_rows = sec.rows("chain", "row");
  if (chain_rows.size() % model.num_modes != 0)
    throw std::runtime_error("model: chain row count must be a multiple of num_modes");
  std::size_t slots = chain_rows.size() / model.num_modes;

  if (kind == "interval") {
    const auto& lo_rows = sec.rows("intervals", "lo");
    const auto& hi_rows = sec.rows("intervals", "hi");
    if (lo_rows.size() != chain_rows.size() || hi_rows.size() != chain_rows.size())
      throw std::runtime_error("model: intervals must have one lo and hi row per chain row");
    model.chain.resize(slots);
    for (std::size_t i = 0; i < chain_rows.size(); ++i) {
      IntervalSet set;
      set.nominal = detail::to_doubles(chain_rows[i], "model chain");
      set.lo = detail::to_doubles(lo_rows[i], "model lo");
      set.hi = detail::to_doubles(hi_rows[i], "model hi");
      model.chain[i / model.num_modes].push_back(std::move(set));
    }
  } else {
    const auto& radius_rows = sec.rows("intervals", "radius");
    if (radius_rows.size() != chain_rows.size())
      throw std::runtime_error("model: kl kind needs one radius per chain row");
    model.chain.resize(slots);
    for (std::size_t i = 0; i < chain_rows.size(); ++i) {
      LikelihoodSet set;
      set.nominal = detail::to_doubles(chain_rows[i], "model chain");
      set.radius = detail::to_double(radius_rows[i].at(0), "model radius");
      model.chain[i / model.num_modes].push_back(std::move(set));
    }
  }

  for (const auto& row : sec.rows("lambda_support", "lambda"))
    model.lambda_support.push_back(detail::to_doubles(row, "model lambda"));
  for (const auto& row : sec.rows("emission", "row"))
    model.emission.push_back(detail::to_doubles(row, "model emission"));

  model.validate();
  return model;
}

inline void write_mode_model(const ModeModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("model: cannot write " + path);
  out.precision(17);
  bool kl = !model.chain.empty() && std::holds_alternative<LikelihoodSet>(model.chain[0][0]);
  out << "[chain]\nnum_modes = " << model.num_modes << "\nkind = " << (kl ? "kl" : "interval") << '\n';
  for (const auto& slot : model.chain)
    for (const auto& set : slot) {
      out << "row =";
      for (double p : nominal_row(set)) out << ' ' << p;
      out << '\n';
    }
  out << "\n[intervals]\n";
  for (const auto& slot : model.chain)
    for (const auto& set : slot) {
      if (kl) {
        out << "radius = " << std::get<LikelihoodSet>(set).radius << '\n';
      } else {
        const auto& is = std::get<IntervalSet>(set);
        out << "lo =";
        for (double v : is.lo) out << ' ' << v;
        out << "\nhi =";
        for (double v : is.hi) out << ' ' << v;
        out << '\n';
      }
    }
  out << "\n[lambda_support]\n";
  for (const auto& lam : model.lambda_support) {
    out << "lambda =";
    for (double l : lam) out << ' ' << l;
    out << '\n';
  }
  out << "\n[emission]\n";
  for (const auto& row : model.emission) {
    out << "row =";
    for (double p : row) out << ' ' << p;
    out << '\n';
  }
}

// Every CSV starts with this comment line so identical inputs give
// byte-identical artifacts and the provenance is visible.
inline std::string metadata_line(std::uint64_t config_digest, std::uint64_t seed) {
  std::ostringstream ss;
  ss << "# dcc " << kToolVersion << " digest=" << std::hex << std::setw(16) << std::setfill('0') << config_digest
     << std::dec << " seed=" << seed;
  return ss.str();
}

inline void write_policy_csv(const ThresholdPolicy& policy, const std::string& path, std::uint64_t digest,
                             std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("policy: cannot write " + path);
  out.precision(17);
  out << metadata_line(digest, seed) << "\nt,theta,k";
  for (int b = 0; b < policy.B; ++b) out << ",tau" << b;
  out << ",h_star\n";
  int slots = policy.is_stationary ? 1 : policy.horizon();
  for (int t = 0; t < slots; ++t)
    for (int th = 0; th < policy.num_modes; ++th)
      for (int ki = 0; ki < num_orthants(policy.B); ++ki) {
        const ThresholdEntry& e = policy.entries[t][th][ki];
        out << t << ',' << th << ',' << ki;
        for (int b = 0; b < policy.B; ++b) out << ',' << e.tau[b];
        out << ',' << e.h_star << '\n';
      }
}

inline ThresholdPolicy read_policy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("policy: cannot open " + path);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) header.push_back(f);
    break;
  }
  if (header.size() < 5 || header[0] != "t" || header.back() != "h_star")
    throw std::runtime_error("policy: unexpected header in " + path);
  int B = static_cast<int>(header.size()) - 4;

  ThresholdPolicy policy;
  policy.B = B;
  int max_t = -1, max_th = -1;
  std::vector<std::vector<double>> raw;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::stringstream ss(line);
    std::string f;
    std::vector<double> row;
    while (std::getline(ss, f, ',')) row.push_back(detail::to_double(f, "policy"));
    if (row.size() != header.size()) throw std::runtime_error("policy: malformed row in " + path);
    max_t = std::max(max_t, static_cast<int>(row[0]));
    max_th = std::max(max_th, static_cast<int>(row[1]));
    raw.push_back(std::move(row));
  }
  if (raw.empty()) throw std::runtime_error("policy: no rows in " + path);
  policy.num_modes = max_th + 1;
  policy.is_stationary = max_t == 0;
  int K = num_orthants(B);
  policy.entries.assign(max_t + 1,
                        std::vector<std::vector<ThresholdEntry>>(policy.num_modes, std::vector<ThresholdEntry>(K)));
  for (const auto& row : raw) {
    int t = static_cast<int>(row[0]), th = static_cast<int>(row[1]), ki = static_cast<int>(row[2]);
    if (ki < 0 || ki >= K) throw std::runtime_error("policy: orthant index out of range in " + path);
    ThresholdEntry e;
    e.tau.resize(B);
    for (int b = 0; b < B; ++b) e.tau[b] = static_cast<int>(row[3 + b]);
    e.h_star = row.back();
    policy.entries[t][th][ki] = e;
  }
  return policy;
}

inline void write_values_csv(const ValueTable& vt, const std::string& path, std::uint64_t digest,
                             std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("values: cannot write " + path);
  out.precision(17);
  out << metadata_line(digest, seed) << "\nt,x,lambda,theta,value\n";
  int slots = vt.full ? vt.h : 1;
  for (int t = 0; t < slots; ++t)
    for (long long xi = 0; xi < vt.num_x; ++xi)
      for (std::size_t li = 0; li < vt.num_lambda; ++li)
        for (int th = 0; th < vt.num_modes; ++th)
          out << t << ',' << xi << ',' << li << ',' << th << ',' << vt.at(t, xi, li, th) << '\n';
}

inline void write_trajectory_csv(const Trajectory& traj, const std::string& path, std::uint64_t digest,
                                 std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("trajectory: cannot write " + path);
  out.precision(17);
  out << metadata_line(digest, seed) << "\n# policy=" << traj.policy_label << "\nt,x,lambda,theta,action,cost\n";
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const TrajStep& s = traj.steps[t];
    out << t << ',' << s.x_idx << ',' << s.lambda_idx << ',' << s.theta << ',' << s.action_idx << ',' << s.cost
        << '\n';
  }
}

inline void write_stats_csv(const BatchStats& stats, const std::string& label, const std::string& path,
                            std::uint64_t digest, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("stats: cannot write " + path);
  out.precision(17);
  out << metadata_line(digest, seed) << "\nt,mean_" << label << ",std_" << label << '\n';
  for (std::size_t t = 0; t < stats.mean.size(); ++t)
    out << (t + 1) << ',' << stats.mean[t] << ',' << stats.stddev[t] << '\n';
}

// Figure-2-style band data: per-slot cumulative mean/std per policy, then a
// `final` summary row repeating the last slot.
inline void write_comparison_csv(const ComparisonReport& report, const std::string& path, std::uint64_t digest,
                                 std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("comparison: cannot write " + path);
  out.precision(17);
  out << metadata_line(digest, seed) << "\nt";
  for (const auto& label : report.labels) out << ",mean_" << label << ",std_" << label;
  out << '\n';
  for (int t = 0; t < report.h; ++t) {
    out << (t + 1);
    for (const auto& s : report.stats) out << ',' << s.mean[t] << ',' << s.stddev[t];
    out << '\n';
  }
  out << "final";
  for (const auto& s : report.stats) out << ',' << s.mean[report.h - 1] << ',' << s.stddev[report.h - 1];
  out << '\n';
}

}  // namespace dcc
