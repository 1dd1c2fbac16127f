#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcc/common.hpp"
#include "dcc/mode_model.hpp"

namespace dcc {

struct TraceSeries {
  std::vector<long long> timestamps;
  std::vector<RateVec> counts;  // T x J
  std::vector<std::string> class_names;

  std::size_t length() const { return timestamps.size(); }

  void validate() const {
    if (counts.size() != timestamps.size()) throw std::invalid_argument("trace: ragged series");
    for (std::size_t t = 1; t < timestamps.size(); ++t)
      if (timestamps[t] <= timestamps[t - 1]) throw std::invalid_argument("trace: timestamps must strictly increase");
    for (const auto& row : counts) {
      if (row.size() != class_names.size()) throw std::invalid_argument("trace: row width mismatch");
      for (double c : row)
        if (c < 0.0) throw std::invalid_argument("trace: negative count");
    }
  }
};

// CSV with header `timestamp,<class1>,...,<classJ>`.
inline TraceSeries parse_trace(const std::string& path, const std::vector<std::string>& class_names) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("trace: cannot open " + path);

  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    return fields;
  };

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trace: empty file " + path);
  std::vector<std::string> header = split(line);
  if (header.empty() || header[0] != "timestamp")
    throw std::runtime_error("trace: header must start with 'timestamp'");
  for (const std::string& name : class_names) {
    if (std::find(header.begin() + 1, header.end(), name) == header.end())
      throw std::runtime_error("trace: header missing class '" + name + "'");
  }
  std::vector<std::size_t> col(class_names.size());
  for (std::size_t j = 0; j < class_names.size(); ++j)
    col[j] = static_cast<std::size_t>(
        std::find(header.begin() + 1, header.end(), class_names[j]) - header.begin());

  TraceSeries series;
  series.class_names = class_names;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields = split(line);
    if (fields.size() != header.size())
      throw std::runtime_error("trace: malformed row at line " + std::to_string(line_no));
    try {
      series.timestamps.push_back(std::stoll(fields[0]));
      RateVec row(class_names.size());
      for (std::size_t j = 0; j < class_names.size(); ++j) {
        row[j] = std::stod(fields[col[j]]);
        if (row[j] < 0.0) throw std::runtime_error("trace: negative count at line " + std::to_string(line_no));
      }
      series.counts.push_back(std::move(row));
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("trace: malformed row at line " + std::to_string(line_no));
    }
  }
  series.validate();
  return series;
}

inline void write_trace(const TraceSeries& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("trace: cannot write " + path);
  out << "timestamp";
  for (const auto& name : series.class_names) out << ',' << name;
  out << '\n';
  out.precision(17);
  for (std::size_t t = 0; t < series.length(); ++t) {
    out << series.timestamps[t];
    for (double c : series.counts[t]) out << ',' << c;
    out << '\n';
  }
}

struct Clustering {
  std::vector<int> assignments;
  std::vector<RateVec> centers;
  double inertia = 0.0;
};

// k-means with k-means++ seeding; empty clusters re-seed at the farthest point.
inline Clustering cluster_modes(const TraceSeries& series, int K, std::uint64_t seed) {
  if (K < 1) throw std::invalid_argument("kmeans: K must be >= 1");
  std::size_t T = series.length();
  if (T < static_cast<std::size_t>(K)) throw std::invalid_argument("kmeans: fewer points than clusters");
  std::size_t J = series.class_names.size();
  const auto& pts = series.counts;

  auto dist2 = [J](const RateVec& a, const RateVec& b) {
    double d = 0.0;
    for (std::size_t j = 0; j < J; ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
    return d;
  };

  Rng rng(seed);
  Clustering out;
  out.centers.push_back(pts[rng.next_below(T)]);
  std::vector<double> d2(T);
  while (static_cast<int>(out.centers.size()) < K) {
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : out.centers) best = std::min(best, dist2(pts[t], c));
      d2[t] = best;
      total += best;
    }
    if (total <= 0.0) {
      out.centers.push_back(pts[rng.next_below(T)]);
      continue;
    }
    double u = rng.next_double() * total, acc = 0.0;
    std::size_t pick = T - 1;
    for (std::size_t t = 0; t < T; ++t) {
      acc += d2[t];
      if (u < acc) {
        pick = t;
        break;
      }
    }
    out.centers.push_back(pts[pick]);
  }

  out.assignments.assign(T, -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (std::size_t t = 0; t < T; ++t) {
      int best = 0;
      double bd = dist2(pts[t], out.centers[0]);
      for (int k = 1; k < K; ++k) {
        double d = dist2(pts[t], out.centers[k]);
        if (d < bd) {
          bd = d;
          best = k;
        }
      }
      if (out.assignments[t] != best) {
        out.assignments[t] = best;
        changed = true;
      }
    }
    std::vector<RateVec> sums(K, RateVec(J, 0.0));
    std::vector<int> sizes(K, 0);
    for (std::size_t t = 0; t < T; ++t) {
      ++sizes[out.assignments[t]];
      for (std::size_t j = 0; j < J; ++j) sums[out.assignments[t]][j] += pts[t][j];
    }
    for (int k = 0; k < K; ++k) {
      if (sizes[k] == 0) {
        // farthest point from its own center restarts the cluster
        std::size_t far = 0;
        double fd = -1.0;
        for (std::size_t t = 0; t < T; ++t) {
          double d = dist2(pts[t], out.centers[out.assignments[t]]);
          if (d > fd) {
            fd = d;
            far = t;
          }
        }
        out.centers[k] = pts[far];
        changed = true;
        continue;
      }
      for (std::size_t j = 0; j < J; ++j) out.centers[k][j] = sums[k][j] / sizes[k];
    }
    if (!changed) break;
  }

  out.inertia = 0.0;
  for (std::size_t t = 0; t < T; ++t) out.inertia += dist2(pts[t], out.centers[out.assignments[t]]);
  return out;
}

namespace detail {

// Acklam's rational approximation of the standard normal quantile.
inline double normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

inline double quantile_of(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  double pos = q * (v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - lo;
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace detail

// Empirical chain with normal-approximation confidence intervals, per-mode
// quantile-quantized arrival support, and empirical emissions over it.
inline ModeModel estimate_mode_model(const TraceSeries& series, const std::vector<int>& assignments, int K,
                                     int lambda_levels, double confidence) {
  if (assignments.size() != series.length()) throw std::invalid_argument("estimate: assignment size mismatch");
  if (lambda_levels < 1) throw std::invalid_argument("estimate: lambda_levels must be >= 1");
  if (confidence < 0.0 || confidence >= 1.0) throw std::invalid_argument("estimate: confidence must be in [0, 1)");
  std::size_t T = series.length();
  std::size_t J = series.class_names.size();

  ModeModel model;
  model.num_modes = K;

  // chain: empirical transition frequencies + confidence half-widths
  double z = confidence > 0.0 ? detail::normal_quantile(0.5 + confidence / 2.0) : 0.0;
  std::vector<std::vector<double>> counts(K, std::vector<double>(K, 0.0));
  std::vector<double> visits(K, 0.0);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    counts[assignments[t]][assignments[t + 1]] += 1.0;
    visits[assignments[t]] += 1.0;
  }
  model.chain.resize(1);
  for (int k = 0; k < K; ++k) {
    IntervalSet set;
    set.nominal.assign(K, 0.0);
    set.lo.assign(K, 0.0);
    set.hi.assign(K, 1.0);
    if (visits[k] == 0.0) {
      // never visited: uniform nominal, full-width intervals
      for (int k2 = 0; k2 < K; ++k2) set.nominal[k2] = 1.0 / K;
    } else {
      for (int k2 = 0; k2 < K; ++k2) {
        double p = counts[k][k2] / visits[k];
        double half = z * std::sqrt(p * (1.0 - p) / visits[k]);
        set.nominal[k2] = p;
        set.lo[k2] = std::max(0.0, p - half);
        set.hi[k2] = std::min(1.0, p + half);
      }
      double shi = 0.0;
      for (double hv : set.hi) shi += hv;
      if (shi < 1.0) {  // widen to keep the simplex intersection nonempty
        double deficit = 1.0 - shi;
        for (int k2 = 0; k2 < K; ++k2) set.hi[k2] = std::min(1.0, set.hi[k2] + deficit);
      }
    }
    model.chain[0].push_back(set);
  }

  // per-mode, per-class quantile grids; observations snap to the nearest grid value
  std::vector<std::vector<std::vector<double>>> grid(K, std::vector<std::vector<double>>(J));
  for (int k = 0; k < K; ++k)
    for (std::size_t j = 0; j < J; ++j) {
      std::vector<double> obs;
      for (std::size_t t = 0; t < T; ++t)
        if (assignments[t] == k) obs.push_back(series.counts[t][j]);
      if (obs.empty()) obs.push_back(0.0);
      std::set<double> levels;
      for (int l = 0; l < lambda_levels; ++l) {
        double q = lambda_levels == 1 ? 0.5 : static_cast<double>(l) / (lambda_levels - 1);
        levels.insert(detail::quantile_of(obs, q));
      }
      grid[k][j].assign(levels.begin(), levels.end());
    }

  auto snap = [](const std::vector<double>& levels, double v) {
    double best = levels[0];
    for (double l : levels)
      if (std::abs(l - v) < std::abs(best - v)) best = l;
    return best;
  };

  std::vector<RateVec> support;
  std::vector<std::vector<double>> em_counts(K);
  auto support_index = [&](const RateVec& lam) {
    for (std::size_t i = 0; i < support.size(); ++i)
      if (support[i] == lam) return i;
    support.push_back(lam);
    for (int k = 0; k < K; ++k) em_counts[k].push_back(0.0);
    return support.size() - 1;
  };
  std::vector<bool> mode_seen(K, false);
  for (std::size_t t = 0; t < T; ++t) {
    int k = assignments[t];
    mode_seen[k] = true;
    RateVec lam(J);
    for (std::size_t j = 0; j < J; ++j) lam[j] = snap(grid[k][j], series.counts[t][j]);
    em_counts[k][support_index(lam)] += 1.0;
  }
  for (int k = 0; k < K; ++k)
    if (!mode_seen[k]) {
      RateVec lam(J);
      for (std::size_t j = 0; j < J; ++j) lam[j] = grid[k][j].front();
      em_counts[k][support_index(lam)] += 1.0;
    }

  model.lambda_support = support;
  model.emission.assign(K, std::vector<double>(support.size(), 0.0));
  for (int k = 0; k < K; ++k) {
    double total = 0.0;
    for (double c : em_counts[k]) total += c;
    for (std::size_t i = 0; i < support.size(); ++i) model.emission[k][i] = em_counts[k][i] / total;
  }
  model.validate();
  return model;
}

// Closed-loop companion to estimate_mode_model: sample the nominal chain and
// emissions into a trace.
inline TraceSeries gen_synthetic_trace(const ModeModel& model, int T, std::uint64_t seed,
                                       std::vector<std::string> class_names = {}) {
  if (T < 1) throw std::invalid_argument("gen trace: T must be >= 1");
  std::size_t J = model.lambda_support.front().size();
  TraceSeries series;
  if (class_names.empty())
    for (std::size_t j = 0; j < J; ++j) class_names.push_back("class" + std::to_string(j + 1));
  series.class_names = std::move(class_names);
  Rng rng(seed);
  std::vector<double> pi = model.nominal_stationary();
  int th = static_cast<int>(rng.categorical(pi));
  for (int t = 0; t < T; ++t) {
    std::size_t li = rng.categorical(model.emission[th]);
    series.timestamps.push_back(t);
    series.counts.push_back(model.lambda_support[li]);
    th = static_cast<int>(rng.categorical(model.nominal_chain_row(t, th)));
  }
  return series;
}

}  // namespace dcc
