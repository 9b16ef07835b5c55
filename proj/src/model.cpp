#include "ophmm/model.hpp"

#include <cmath>

namespace ophmm {

void Hyperparams::validate() const {
  if (alpha <= 0.0 || beta <= 0.0) throw config_error("gamma prior parameters must be positive");
  if (omega <= 0.0) throw config_error("dirichlet concentration must be positive");
  if (!psi.positive_definite()) throw config_error("inverse-wishart scale must be positive definite");
  if (delta <= 3.0) throw config_error("inverse-wishart dof must exceed 3 for a finite mean");
  if (kappa_bar < 1) throw config_error("state cap must be at least 1");
}

Hyperparams default_hyperparams(const SpatialGrid& grid) {
  Hyperparams h;
  double span = grid.max_distance();
  if (span <= 0.0) span = grid.cell_size();
  double v = (span / 8.0) * (span / 8.0);
  h.psi = {v, 0.0, v};
  return h;
}

void ModelParams::validate(const SpatialGrid& grid) const {
  if (kappa < 1) throw data_error("model must have at least one state");
  if (n_cells < 1) throw data_error("model must have at least one cell");
  if (dt <= 0.0) throw data_error("model bin width must be positive");
  if (P.rows() != static_cast<std::size_t>(kappa) || P.cols() != static_cast<std::size_t>(kappa))
    throw data_error("transition matrix shape mismatch");
  for (int i = 0; i < kappa; ++i) {
    double s = 0.0;
    for (int j = 0; j < kappa; ++j) {
      if (P(i, j) < 0.0) throw data_error("negative transition probability");
      s += P(i, j);
    }
    if (std::abs(s - 1.0) > 1e-9) throw data_error("transition row does not sum to 1");
  }
  if (lambda.rows() != static_cast<std::size_t>(kappa) ||
      lambda.cols() != static_cast<std::size_t>(n_cells))
    throw data_error("rate matrix shape mismatch");
  for (double v : lambda.data())
    if (v < 0.0 || !std::isfinite(v)) throw data_error("firing rates must be finite and non-negative");
  if (static_cast<int>(xi.size()) != kappa || static_cast<int>(sigma.size()) != kappa)
    throw data_error("place-field parameter count mismatch");
  for (int c : xi)
    if (c < 1 || c > grid.size()) throw data_error("place-field centre outside grid");
  for (const Sym2& s : sigma)
    if (!s.positive_definite()) throw data_error("place-field covariance not positive definite");
}

double spike_log_lik(const ModelParams& m, int state, std::span<const int> counts) {
  if (state < 1 || state > m.kappa) throw data_error("state index out of range");
  if (static_cast<int>(counts.size()) != m.n_cells) throw data_error("count vector length mismatch");
  double ll = 0.0;
  const double* rates = m.lambda.row(state - 1);
  for (int n = 0; n < m.n_cells; ++n) {
    double mu = m.dt * rates[n];
    int y = counts[n];
    if (y < 0) throw data_error("negative spike count");
    if (mu == 0.0) {
      if (y > 0) return NEG_INF;
      continue;  // 0 * log 0 = 0
    }
    ll += -mu + y * std::log(mu) - std::lgamma(static_cast<double>(y) + 1.0);
  }
  return ll;
}

Vec position_probs(const SpatialGrid& grid, int xi, const Sym2& sigma) {
  const int m = grid.size();
  Vec logq(m);
  double mx = NEG_INF;
  for (int x = 1; x <= m; ++x) {
    Vec2 f = grid.embed(xi, x);
    logq[x - 1] = -0.5 * sigma.inv_quad(f);
    mx = std::max(mx, logq[x - 1]);
  }
  double total = 0.0;
  for (double& v : logq) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : logq) v /= total;
  return logq;
}

Mat position_log_prob_table(const ModelParams& m, const SpatialGrid& grid) {
  Mat table(m.kappa, grid.size());
  for (int i = 0; i < m.kappa; ++i) {
    Vec p = position_probs(grid, m.xi[i], m.sigma[i]);
    for (int x = 0; x < grid.size(); ++x)
      table(i, x) = p[x] > 0.0 ? std::log(p[x]) : NEG_INF;
  }
  return table;
}

Vec stationary_distribution(const Mat& P, bool* used_fallback) {
  const int k = static_cast<int>(P.rows());
  if (P.cols() != static_cast<std::size_t>(k) || k < 1)
    throw data_error("stationary_distribution: square matrix required");
  if (used_fallback) *used_fallback = false;
  if (k == 1) return Vec{1.0};

  // (P' - I) nu = 0 with the last equation replaced by sum(nu) = 1.
  Mat a(k, k);
  Vec b(k, 0.0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) a(i, j) = P(j, i) - (i == j ? 1.0 : 0.0);
  for (int j = 0; j < k; ++j) a(k - 1, j) = 1.0;
  b[k - 1] = 1.0;

  try {
    Vec nu = solve_linear(a, b);
    bool ok = true;
    for (double v : nu)
      if (v < -1e-9 || !std::isfinite(v)) ok = false;
    if (ok) {
      // Verify nu' P = nu'; reducible chains can still solve but drift.
      for (int j = 0; j < k && ok; ++j) {
        double s = 0.0;
        for (int i = 0; i < k; ++i) s += nu[i] * P(i, j);
        if (std::abs(s - nu[j]) > 1e-8) ok = false;
      }
    }
    if (ok) {
      double total = 0.0;
      for (double& v : nu) {
        v = std::max(v, 0.0);
        total += v;
      }
      for (double& v : nu) v /= total;
      return nu;
    }
  } catch (const numerical_error&) {
    // fall through to the averaging fallback
  }

  if (used_fallback) *used_fallback = true;
  // Cesaro average of uniform * P^n over the first 10^4 powers, which
  // converges for periodic and reducible chains alike.
  Vec cur(k, 1.0 / k), acc(k, 0.0), nxt(k, 0.0);
  const int steps = 10000;
  for (int n = 0; n < steps; ++n) {
    for (int j = 0; j < k; ++j) acc[j] += cur[j];
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (int i = 0; i < k; ++i) {
      if (cur[i] == 0.0) continue;
      for (int j = 0; j < k; ++j) nxt[j] += cur[i] * P(i, j);
    }
    std::swap(cur, nxt);
  }
  double total = 0.0;
  for (double& v : acc) total += v;
  for (double& v : acc) v /= total;
  return acc;
}

ModelParams adapt_model_dt(const ModelParams& m, double new_dt) {
  if (!(new_dt > 0.0)) throw config_error("bin width must be positive");
  const double ratio = new_dt / m.dt;
  const long k = std::lround(ratio);
  if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-9)
    throw config_error("bin width " + std::to_string(new_dt) +
                       " is not an integer multiple of the model's " + std::to_string(m.dt));
  ModelParams out = m;
  out.dt = new_dt;
  if (k == 1) return out;
  // P^k by repeated multiplication; each row renormalised against round-off.
  const int n = m.kappa;
  Mat acc = m.P;
  for (long step = 1; step < k; ++step) {
    Mat next(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += acc(i, l) * m.P(l, j);
        next(i, j) = s;
      }
    acc = std::move(next);
  }
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) row += acc(i, j);
    for (int j = 0; j < n; ++j) acc(i, j) /= row;
  }
  out.P = std::move(acc);
  return out;
}

RelabelResult relabel_by_appearance(const ModelParams& m, const std::vector<int>& state_path) {
  std::vector<int> order;  // old labels in appearance order
  std::vector<char> seen(static_cast<std::size_t>(m.kappa), 0);
  for (int s : state_path) {
    if (s < 1 || s > m.kappa) throw config_error("state path label outside the model");
    if (!seen[static_cast<std::size_t>(s - 1)]) {
      seen[static_cast<std::size_t>(s - 1)] = 1;
      order.push_back(s);
    }
  }
  for (int s = 1; s <= m.kappa; ++s)
    if (!seen[static_cast<std::size_t>(s - 1)]) order.push_back(s);

  RelabelResult out;
  out.old_to_new.assign(static_cast<std::size_t>(m.kappa), 0);
  for (int new_label = 1; new_label <= m.kappa; ++new_label)
    out.old_to_new[static_cast<std::size_t>(order[static_cast<std::size_t>(new_label - 1)] - 1)] =
        new_label;

  ModelParams r = m;
  for (int i = 1; i <= m.kappa; ++i) {
    const int ni = out.old_to_new[static_cast<std::size_t>(i - 1)];
    r.xi[static_cast<std::size_t>(ni - 1)] = m.xi[static_cast<std::size_t>(i - 1)];
    r.sigma[static_cast<std::size_t>(ni - 1)] = m.sigma[static_cast<std::size_t>(i - 1)];
    for (int n = 0; n < m.n_cells; ++n) r.lambda(ni - 1, n) = m.lambda(i - 1, n);
    for (int j = 1; j <= m.kappa; ++j) {
      const int nj = out.old_to_new[static_cast<std::size_t>(j - 1)];
      r.P(ni - 1, nj - 1) = m.P(i - 1, j - 1);
    }
  }
  out.params = std::move(r);
  return out;
}

AugmentedChain::AugmentedChain(const Mat& P) : P_(P) {
  kappa_ = static_cast<int>(P.rows());
  if (P.cols() != static_cast<std::size_t>(kappa_) || kappa_ < 1)
    throw data_error("augmented chain requires a square transition matrix");
  if (kappa_ > 64) throw config_error("augmented chain supports at most 64 base states");
  n_ = kappa_ * (kappa_ + 1) / 2;
  tail_ = Mat(kappa_, kappa_, 0.0);
  for (int sp = 1; sp <= kappa_; ++sp) {
    double acc = 0.0;
    for (int k = kappa_; k >= 1; --k) {
      // tail(sp, k) = sum_{s > k} P[sp][s]
      if (k < kappa_) acc += P_(sp - 1, k);  // adds P[sp][k+1]
      tail_(sp - 1, k - 1) = acc;
    }
  }
  s_of_.resize(n_);
  k_of_.resize(n_);
  for (int k = 1; k <= kappa_; ++k)
    for (int s = 1; s <= k; ++s) {
      s_of_[index(s, k)] = s;
      k_of_[index(s, k)] = k;
    }
}

double AugmentedChain::prob(int idx_from, int idx_to) const {
  int sp = s_of_[idx_from], kp = k_of_[idx_from];
  int sn = s_of_[idx_to], kn = k_of_[idx_to];
  if (kn == kp && sn <= kp) return base(sp, sn);
  if (kn == kp + 1 && sn == kn) return tail(sp, kp);
  return 0.0;
}

Vec AugmentedChain::initial_slice() const {
  Vec v(n_, 0.0);
  v[index(1, 1)] = 1.0;
  return v;
}

double AugmentedChain::forward_step(std::span<const double> prev, std::span<const double> log_emit,
                                    std::span<double> next) const {
  // Emission weights after max subtraction keep everything in [0, 1].
  double mx = NEG_INF;
  for (int s = 0; s < kappa_; ++s) mx = std::max(mx, log_emit[s]);
  if (mx == NEG_INF) return NEG_INF;

  std::fill(next.begin(), next.end(), 0.0);
  for (int k = 1; k <= kappa_; ++k) {
    const int base_idx = index(1, k);
    // Within-seen transitions: block k -> block k.
    for (int sp = 1; sp <= k; ++sp) {
      double mass = prev[base_idx + sp - 1];
      if (mass == 0.0) continue;
      const double* row = P_.row(sp - 1);
      for (int sn = 1; sn <= k; ++sn) next[base_idx + sn - 1] += mass * row[sn - 1];
    }
    // New-state transition: block k-1 -> diagonal entry (k, k).
    if (k >= 2) {
      const int prev_base = index(1, k - 1);
      double acc = 0.0;
      for (int sp = 1; sp <= k - 1; ++sp)
        acc += prev[prev_base + sp - 1] * tail_(sp - 1, k - 2);
      next[base_idx + k - 1] += acc;
    }
  }

  // One exp per base state; every augmented state in the same base state
  // shares the emission weight.
  double wts[64];
  for (int s = 0; s < kappa_; ++s) wts[s] = std::exp(log_emit[s] - mx);
  double total = 0.0;
  for (int idx = 0; idx < n_; ++idx) {
    next[idx] *= wts[s_of_[idx] - 1];
    total += next[idx];
  }
  if (total <= 0.0) return NEG_INF;
  double inv = 1.0 / total;
  for (int idx = 0; idx < n_; ++idx) next[idx] *= inv;
  return mx + std::log(total);
}

double AugmentedChain::backward_step(std::span<const double> next, std::span<const double> log_emit,
                                     std::span<double> prev) const {
  double mx = NEG_INF;
  for (int s = 0; s < kappa_; ++s) mx = std::max(mx, log_emit[s]);
  if (mx == NEG_INF) return NEG_INF;

  // weighted(j) = beta_{t+1}(j) * p(obs_{t+1} | j)
  double wts[64];
  for (int s = 0; s < kappa_; ++s) wts[s] = std::exp(log_emit[s] - mx);
  Vec weighted(n_);
  for (int idx = 0; idx < n_; ++idx) weighted[idx] = next[idx] * wts[s_of_[idx] - 1];

  std::fill(prev.begin(), prev.end(), 0.0);
  for (int k = 1; k <= kappa_; ++k) {
    const int base_idx = index(1, k);
    for (int sp = 1; sp <= k; ++sp) {
      double acc = 0.0;
      const double* row = P_.row(sp - 1);
      for (int sn = 1; sn <= k; ++sn) acc += row[sn - 1] * weighted[base_idx + sn - 1];
      if (k < kappa_) acc += tail_(sp - 1, k - 1) * weighted[index(k + 1, k + 1)];
      prev[base_idx + sp - 1] = acc;
    }
  }

  double total = 0.0;
  for (int idx = 0; idx < n_; ++idx) total += prev[idx];
  if (total <= 0.0) return NEG_INF;
  double inv = 1.0 / total;
  for (int idx = 0; idx < n_; ++idx) prev[idx] *= inv;
  return mx + std::log(total);
}

}  // namespace ophmm
