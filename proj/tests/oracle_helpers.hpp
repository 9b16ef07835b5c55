#pragma once

// Brute-force reference implementations used to cross-check the library's
// dynamic-programming and sampling code. Everything here favours clarity
// over speed: joint probabilities are evaluated by explicit enumeration of
// state paths, and distribution functions are computed with textbook series
// rather than shared library code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "ophmm/grid.hpp"
#include "ophmm/model.hpp"

namespace oracle {

using ophmm::Mat;
using ophmm::ModelParams;
using ophmm::SpatialGrid;
using ophmm::Vec;

// ---- path enumeration ----------------------------------------------------

// All base-state paths s_{1:T} reachable from s_0 = 1 under appearance-order
// labelling: a step may revisit any of the k states seen so far or open
// exactly state k + 1 (never skipping a label), with at most kappa states.
inline std::vector<std::vector<int>> enumerate_paths(int kappa, int T) {
  std::vector<std::vector<int>> out;
  std::vector<int> path(T);
  std::function<void(int, int)> rec = [&](int t, int seen) {
    if (t == T) {
      out.push_back(path);
      return;
    }
    int top = std::min(kappa, seen + 1);
    for (int s = 1; s <= top; ++s) {
      path[t] = s;
      rec(t + 1, std::max(seen, s));
    }
  };
  rec(0, 1);
  return out;
}

// log p(s_{1:T} | P) with s_0 = 1, under appearance-order labelling: a step
// to a previously seen state uses its own transition probability, while the
// first arrival of the (K+1)-th state aggregates every not-yet-seen column
// (any unseen underlying state would have been relabelled K+1).
inline double path_log_prob(const ModelParams& m, const std::vector<int>& path) {
  double lp = 0.0;
  int prev = 1, seen = 1;
  for (int s : path) {
    if (s <= seen) {
      lp += std::log(m.P(prev - 1, s - 1));
    } else {
      double tail = 0.0;
      for (int l = seen + 1; l <= m.kappa; ++l) tail += m.P(prev - 1, l - 1);
      lp += std::log(tail);
      seen = s;
    }
    prev = s;
  }
  return lp;
}

// log p(y_t | s) for independent Poisson counts with exposure dt.
inline double poisson_log_lik(const ModelParams& m, int state, std::span<const int> counts) {
  double ll = 0.0;
  for (std::size_t n = 0; n < counts.size(); ++n) {
    double mean = m.dt * m.lambda(state - 1, static_cast<int>(n));
    ll += counts[n] * std::log(mean) - mean - std::lgamma(counts[n] + 1.0);
  }
  return ll;
}

// Normalised p(x | i) over grid labels, recomputed from first principles.
inline Vec position_distribution(const ModelParams& m, const SpatialGrid& grid, int state) {
  Vec p(grid.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (int x = 1; x <= grid.size(); ++x) {
    ophmm::Vec2 f = grid.embed(m.xi[state - 1], x);
    p[x - 1] = -0.5 * m.sigma[state - 1].inv_quad(f);
    mx = std::max(mx, p[x - 1]);
  }
  double z = 0.0;
  for (double& v : p) z += (v = std::exp(v - mx));
  for (double& v : p) v /= z;
  return p;
}

// log joint of path and observations; positions may be empty (spikes only).
inline double path_obs_log_lik(const ModelParams& m, const SpatialGrid& grid,
                               const std::vector<int>& path,
                               const std::vector<std::vector<int>>& counts,
                               const std::vector<int>& positions) {
  std::vector<Vec> pos_tables;
  if (!positions.empty())
    for (int i = 1; i <= m.kappa; ++i) pos_tables.push_back(position_distribution(m, grid, i));
  double ll = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) {
    ll += poisson_log_lik(m, path[t], counts[t]);
    if (!positions.empty()) ll += std::log(pos_tables[path[t] - 1][positions[t] - 1]);
  }
  return ll;
}

// Total data likelihood p(obs_{1:T}) by explicit path summation.
inline double brute_log_lik(const ModelParams& m, const SpatialGrid& grid,
                            const std::vector<std::vector<int>>& counts,
                            const std::vector<int>& positions) {
  auto paths = enumerate_paths(m.kappa, static_cast<int>(counts.size()));
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(paths.size());
  for (const auto& path : paths) {
    double v = path_log_prob(m, path) + path_obs_log_lik(m, grid, path, counts, positions);
    terms.push_back(v);
    mx = std::max(mx, v);
  }
  double z = 0.0;
  for (double v : terms) z += std::exp(v - mx);
  return mx + std::log(z);
}

// Number of distinct states in a path prefix (s_0 = 1 counts as seen).
inline int distinct_by(const std::vector<int>& path, int t) {
  int k = 1;
  for (int u = 0; u < t; ++u) k = std::max(k, path[u]);
  return k;
}

// Smoothed joint posterior p(S_t = s, K_t = k | obs) for t = 1..T by
// enumeration; row t-1, column index (s, k) -> k(k-1)/2 + s - 1.
inline Mat brute_smoothed(const ModelParams& m, const SpatialGrid& grid,
                          const std::vector<std::vector<int>>& counts,
                          const std::vector<int>& positions) {
  int T = static_cast<int>(counts.size());
  int n_aug = m.kappa * (m.kappa + 1) / 2;
  auto paths = enumerate_paths(m.kappa, T);
  Mat post(T, n_aug);
  double total = brute_log_lik(m, grid, counts, positions);
  for (const auto& path : paths) {
    double w = std::exp(path_log_prob(m, path) + path_obs_log_lik(m, grid, path, counts, positions) -
                        total);
    for (int t = 1; t <= T; ++t) {
      int s = path[t - 1], k = distinct_by(path, t);
      post(t - 1, k * (k - 1) / 2 + s - 1) += w;
    }
  }
  return post;
}

// Posterior over K_T by enumeration.
inline Vec brute_k_posterior(const ModelParams& m, const SpatialGrid& grid,
                             const std::vector<std::vector<int>>& counts,
                             const std::vector<int>& positions) {
  int T = static_cast<int>(counts.size());
  auto paths = enumerate_paths(m.kappa, T);
  double total = brute_log_lik(m, grid, counts, positions);
  Vec post(m.kappa);
  for (const auto& path : paths) {
    double w = std::exp(path_log_prob(m, path) + path_obs_log_lik(m, grid, path, counts, positions) -
                        total);
    post[distinct_by(path, T) - 1] += w;
  }
  return post;
}

// Highest-posterior base-state path; ties resolve to the lexicographically
// smallest path, matching a lowest-index tie rule applied stepwise.
inline std::vector<int> brute_map_path(const ModelParams& m, const SpatialGrid& grid,
                                       const std::vector<std::vector<int>>& counts,
                                       const std::vector<int>& positions) {
  auto paths = enumerate_paths(m.kappa, static_cast<int>(counts.size()));
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> arg;
  for (const auto& path : paths) {
    double v = path_log_prob(m, path) + path_obs_log_lik(m, grid, path, counts, positions);
    if (v > best + 1e-12 || (v > best - 1e-12 && (arg.empty() || path < arg))) {
      best = std::max(best, v);
      arg = path;
    }
  }
  return arg;
}

// p(X_t = x | y_{1:T}): spikes-only path enumeration, then the state-to-
// position mixture at time t.
inline Vec brute_position_posterior_at(const ModelParams& m, const SpatialGrid& grid,
                                       const std::vector<std::vector<int>>& counts, int t) {
  int T = static_cast<int>(counts.size());
  auto paths = enumerate_paths(m.kappa, T);
  double total = brute_log_lik(m, grid, counts, {});
  Vec state_marg(m.kappa);
  for (const auto& path : paths) {
    double w =
        std::exp(path_log_prob(m, path) + path_obs_log_lik(m, grid, path, counts, {}) - total);
    state_marg[path[t - 1] - 1] += w;
  }
  Vec out(grid.size());
  for (int i = 1; i <= m.kappa; ++i) {
    Vec px = position_distribution(m, grid, i);
    for (int x = 0; x < grid.size(); ++x) out[x] += state_marg[i - 1] * px[x];
  }
  return out;
}

// log p(X_{t:t+a-1} = labels | y_{1:T}): enumeration over full-length state
// paths, weighting each by the probability of emitting the window's labels.
inline double brute_trajectory_log_posterior(const ModelParams& m, const SpatialGrid& grid,
                                             const std::vector<std::vector<int>>& counts,
                                             const std::vector<int>& labels, int t) {
  int T = static_cast<int>(counts.size());
  auto paths = enumerate_paths(m.kappa, T);
  double total = brute_log_lik(m, grid, counts, {});
  std::vector<Vec> pos_tables;
  for (int i = 1; i <= m.kappa; ++i) pos_tables.push_back(position_distribution(m, grid, i));
  double acc = 0.0;
  for (const auto& path : paths) {
    double w =
        std::exp(path_log_prob(m, path) + path_obs_log_lik(m, grid, path, counts, {}) - total);
    double traj = 1.0;
    for (std::size_t u = 0; u < labels.size(); ++u)
      traj *= pos_tables[path[t - 1 + u] - 1][labels[u] - 1];
    acc += w * traj;
  }
  return std::log(acc);
}

// log of the stationary-chain marginal probability of emitting the labels:
// sum over state windows of nu(s_1) prod P(s_u -> s_{u+1}) prod p(x_u | s_u).
inline double brute_trajectory_log_marginal(const ModelParams& m, const SpatialGrid& grid,
                                            const Vec& nu, const std::vector<int>& labels) {
  int a = static_cast<int>(labels.size());
  std::vector<Vec> pos_tables;
  for (int i = 1; i <= m.kappa; ++i) pos_tables.push_back(position_distribution(m, grid, i));
  std::vector<int> window(a, 1);
  double acc = 0.0;
  while (true) {
    double p = nu[window[0] - 1];
    for (int u = 0; u + 1 < a; ++u) p *= m.P(window[u] - 1, window[u + 1] - 1);
    for (int u = 0; u < a; ++u) p *= pos_tables[window[u] - 1][labels[u] - 1];
    acc += p;
    int pos = a - 1;
    while (pos >= 0 && window[pos] == m.kappa) window[pos--] = 1;
    if (pos < 0) break;
    ++window[pos];
  }
  return std::log(acc);
}

// ---- distribution functions ------------------------------------------------

// Regularised lower incomplete gamma P(a, x), series + continued fraction.
inline double reg_gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

// CDF of Gamma(shape, rate).
inline double gamma_cdf(double x, double shape, double rate) {
  return reg_gamma_p(shape, rate * x);
}

// CDF of the inverse-gamma distribution with the given shape and scale.
inline double inverse_gamma_cdf(double x, double shape, double scale) {
  if (x <= 0.0) return 0.0;
  return 1.0 - reg_gamma_p(shape, scale / x);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Regularised incomplete beta I_x(a, b) by Lentz's continued fraction.
inline double reg_beta(double x, double a, double b) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  auto contfrac = [](double x_, double a_, double b_) {
    double qab = a_ + b_, qap = a_ + 1.0, qam = a_ - 1.0;
    double c = 1.0, d = 1.0 - qab * x_ / qap;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
      int m2 = 2 * m;
      double aa = m * (b_ - m) * x_ / ((qam + m2) * (a_ + m2));
      d = 1.0 + aa * d;
      if (std::fabs(d) < 1e-300) d = 1e-300;
      c = 1.0 + aa / c;
      if (std::fabs(c) < 1e-300) c = 1e-300;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a_ + m) * (qab + m) * x_ / ((a_ + m2) * (qap + m2));
      d = 1.0 + aa * d;
      if (std::fabs(d) < 1e-300) d = 1e-300;
      c = 1.0 + aa / c;
      if (std::fabs(c) < 1e-300) c = 1e-300;
      d = 1.0 / d;
      double del = d * c;
      h *= del;
      if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return h;
  };
  double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * contfrac(x, a, b) / a;
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                        b * std::log1p(-x) + a * std::log(x)) *
                   contfrac(1.0 - x, b, a) / b;
}

inline double beta_cdf(double x, double a, double b) { return reg_beta(x, a, b); }

// ---- sample tests ----------------------------------------------------------

// Kolmogorov-Smirnov statistic of a sample against a CDF.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  double n = static_cast<double>(sample.size());
  double sup = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    sup = std::max(sup, std::fabs(f - (i + 1) / n));
    sup = std::max(sup, std::fabs(f - i / n));
  }
  return sup;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double sup = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    sup = std::max(sup, std::fabs(static_cast<double>(i) / a.size() -
                                  static_cast<double>(j) / b.size()));
  }
  return sup;
}

// Critical value of the two-sample K-S statistic at level alpha.
inline double ks_two_sample_critical(std::size_t n, std::size_t m, double alpha) {
  double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c * std::sqrt((n + m) / static_cast<double>(n * m));
}

}  // namespace oracle
