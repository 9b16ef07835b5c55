#include "ophmm/conjugate.hpp"

#include <cmath>

namespace ophmm {

SufficientStats SufficientStats::empty(int kappa, int n_cells, int n_labels) {
  SufficientStats st;
  st.kappa = kappa;
  st.n_cells = n_cells;
  st.n_labels = n_labels;
  st.A = Mat(kappa, kappa, 0.0);
  st.B = Mat(kappa, kappa, 0.0);
  st.c.assign(kappa, 0);
  st.spike_sums = Mat(kappa, n_cells, 0.0);
  st.pos_hist = Mat(kappa, n_labels, 0.0);
  st.seen_so_far.assign(1, 1);  // s_0 = 1 is already emitted
  return st;
}

void SufficientStats::update(int s_prev, int s_new, bool first_arrival,
                             std::span<const int> counts, int label) {
  if (s_prev < 1 || s_prev > kappa || s_new < 1 || s_new > kappa)
    throw data_error("sufficient stats: state out of range");
  A(s_prev - 1, s_new - 1) += 1.0;
  if (first_arrival) B(s_prev - 1, s_new - 1) = 1.0;
  ++c[s_new - 1];
  if (static_cast<int>(counts.size()) != n_cells)
    throw data_error("sufficient stats: count width mismatch");
  for (int n = 0; n < n_cells; ++n) spike_sums(s_new - 1, n) += counts[n];
  if (label > 0) {
    if (label > n_labels) throw data_error("sufficient stats: label out of range");
    pos_hist(s_new - 1, label - 1) += 1.0;
  }
}

long SufficientStats::pos_count(int i) const {
  double n = 0.0;
  for (int v = 0; v < n_labels; ++v) n += pos_hist(i - 1, v);
  return static_cast<long>(std::llround(n));
}

void SufficientStats::check_consistency() const {
  // Visit counts equal column sums of A, first arrivals are unique per
  // column, and nothing arrives "first" at state 1 (the fixed start state).
  for (int j = 0; j < kappa; ++j) {
    double col = 0.0, firsts = 0.0;
    for (int i = 0; i < kappa; ++i) {
      col += A(i, j);
      firsts += B(i, j);
    }
    if (static_cast<long>(std::llround(col)) != c[j])
      throw numerical_error("sufficient stats: visit count desynchronised");
    if (firsts > 1.0 + 1e-12) throw numerical_error("sufficient stats: duplicate first arrival");
    if (j == 0 && firsts != 0.0) throw numerical_error("sufficient stats: arrival at start state");
  }
}

SufficientStats stats_from_path(const AugmentedChain& chain, const std::vector<int>& aug_path,
                                const BinnedDataset& data, int n_labels) {
  if (aug_path.size() != static_cast<std::size_t>(data.T()) + 1)
    throw data_error("stats_from_path: path/data length mismatch");
  if (n_labels == 0)
    for (int x : data.positions) n_labels = std::max(n_labels, x);
  SufficientStats st = SufficientStats::empty(chain.kappa(), data.n_cells, n_labels);
  for (int t = 1; t <= data.T(); ++t) {
    int prev = aug_path[t - 1], cur = aug_path[t];
    int s_prev = chain.state_of(prev);
    int s_cur = chain.state_of(cur);
    bool first = chain.seen_of(cur) == chain.seen_of(prev) + 1;
    int label = data.has_positions() ? data.positions[t - 1] : 0;
    st.update(s_prev, s_cur, first, data.counts[t - 1], label);
  }
  return st;
}

Vec sample_lambda_row(const SufficientStats& st, int state, const Hyperparams& hp, double dt,
                      RngStream& rng) {
  Vec row(st.n_cells);
  double rate = dt * static_cast<double>(st.c[state - 1]) + hp.beta;
  for (int n = 0; n < st.n_cells; ++n) {
    double shape = st.spike_sums(state - 1, n) + hp.alpha;
    row[n] = rng.gamma(shape, rate);
  }
  return row;
}

int embedded_mean_minimiser(const SufficientStats& st, int state, const SpatialGrid& grid) {
  long n = st.pos_count(state);
  if (n == 0) return 0;
  int best = 0;
  double best_norm = std::numeric_limits<double>::infinity();
  for (int x = 1; x <= grid.size(); ++x) {
    Vec2 acc{0.0, 0.0};
    for (int v = 1; v <= grid.size(); ++v) {
      double cnt = (v <= st.n_labels) ? st.pos_hist(state - 1, v - 1) : 0.0;
      if (cnt == 0.0) continue;
      acc = acc + cnt * grid.embed(x, v);
    }
    double value = norm((1.0 / n) * acc);
    if (value < best_norm - 1e-12) {
      best_norm = value;
      best = x;
    }
  }
  return best;
}

Sym2 scatter_matrix(const SufficientStats& st, int state, int xi, const SpatialGrid& grid) {
  Sym2 ss{0.0, 0.0, 0.0};
  for (int v = 1; v <= std::min(grid.size(), st.n_labels); ++v) {
    double cnt = st.pos_hist(state - 1, v - 1);
    if (cnt == 0.0) continue;
    Vec2 f = grid.embed(xi, v);
    ss.xx += cnt * f.x * f.x;
    ss.xy += cnt * f.x * f.y;
    ss.yy += cnt * f.y * f.y;
  }
  return ss;
}

Sym2 sample_inverse_wishart(const Sym2& psi, double dof, RngStream& rng) {
  if (dof <= 1.0) throw numerical_error("inverse-wishart dof too small");
  // Draw W ~ Wishart(dof, psi^{-1}) by Bartlett decomposition, then invert.
  Sym2 inv_psi = psi.inverse();
  double l11, l21, l22;
  inv_psi.cholesky(l11, l21, l22);
  double a11 = std::sqrt(rng.chi_squared(dof));
  double a21 = rng.normal();
  double a22 = std::sqrt(rng.chi_squared(dof - 1.0));
  // M = L * A (lower triangular), W = M M'.
  double m11 = l11 * a11;
  double m21 = l21 * a11 + l22 * a21;
  double m22 = l22 * a22;
  Sym2 w{m11 * m11, m11 * m21, m21 * m21 + m22 * m22};
  return w.inverse();
}

Sym2 sample_sigma(const SufficientStats& st, int state, int xi, const Hyperparams& hp,
                  const SpatialGrid& grid, RngStream& rng) {
  long n = st.pos_count(state);
  if (n == 0 || xi == 0) return sample_inverse_wishart(hp.psi, hp.delta, rng);
  Sym2 ss = scatter_matrix(st, state, xi, grid);
  Sym2 scale{hp.psi.xx + ss.xx, hp.psi.xy + ss.xy, hp.psi.yy + ss.yy};
  return sample_inverse_wishart(scale, hp.delta + static_cast<double>(n), rng);
}

int sample_xi(const SufficientStats& st, int state, const Sym2& sigma, const SpatialGrid& grid,
              RngStream& rng) {
  long n = st.pos_count(state);
  if (n == 0) return 1 + static_cast<int>(rng.uniform_int(grid.size()));
  int centre = embedded_mean_minimiser(st, state, grid);
  Sym2 scaled = sigma.scaled(1.0 / static_cast<double>(n));
  Vec w(grid.size());
  for (int x = 1; x <= grid.size(); ++x) {
    Vec2 f = grid.embed(centre, x);
    w[x - 1] = std::exp(-0.5 * scaled.inv_quad(f));  // exponents <= 0, no overflow
  }
  return 1 + static_cast<int>(rng.categorical(w));
}

Vec generalised_dirichlet_row(std::span<const double> zeta, std::span<const double> gamma,
                              RngStream& rng) {
  const std::size_t k = zeta.size();
  if (gamma.size() != k) throw numerical_error("generalised dirichlet: parameter length mismatch");
  if (k == 1) return Vec{1.0};
  for (std::size_t j = 0; j < k; ++j)
    if (zeta[j] <= 0.0 || gamma[j] < 0.0)
      throw numerical_error("generalised dirichlet: invalid parameters (statistics bug?)");

  // eta_j = sum_{l > j} (zeta_l + gamma_l), the Beta second parameter that
  // makes stick-breaking match the posterior over a row summing to one.
  Vec eta(k - 1, 0.0);
  double acc = 0.0;
  for (std::size_t j = k; j-- > 1;) {
    acc += zeta[j] + gamma[j];
    eta[j - 1] = acc;
  }

  Vec row(k, 0.0);
  double remaining = 1.0;
  for (std::size_t j = 0; j < k - 1; ++j) {
    if (eta[j] <= 0.0) throw numerical_error("generalised dirichlet: nonpositive eta");
    double z = rng.beta(zeta[j], eta[j]);
    row[j] = z * remaining;
    remaining -= row[j];
  }
  row[k - 1] = std::max(0.0, remaining);
  return row;
}

Vec sample_transition_row(const SufficientStats& st, int state, const Hyperparams& hp,
                          RngStream& rng) {
  const int k = st.kappa;
  Vec zeta(k), gamma(k);
  for (int j = 0; j < k; ++j) {
    double a = st.A(state - 1, j);
    double b = st.B(state - 1, j);
    zeta[j] = a - b + hp.omega;
    gamma[j] = b;
  }
  return generalised_dirichlet_row(zeta, gamma, rng);
}

ModelParams sample_prior(const Hyperparams& hp, int kappa, int n_cells, double dt,
                         const SpatialGrid& grid, RngStream& rng) {
  ModelParams m;
  m.kappa = kappa;
  m.n_cells = n_cells;
  m.dt = dt;
  m.P = Mat(kappa, kappa);
  for (int i = 0; i < kappa; ++i) {
    // Dirichlet(omega 1) row via normalised gammas.
    double total = 0.0;
    for (int j = 0; j < kappa; ++j) {
      m.P(i, j) = rng.gamma(hp.omega, 1.0);
      total += m.P(i, j);
    }
    for (int j = 0; j < kappa; ++j) m.P(i, j) /= total;
  }
  m.lambda = Mat(kappa, n_cells);
  for (int i = 0; i < kappa; ++i)
    for (int n = 0; n < n_cells; ++n) m.lambda(i, n) = rng.gamma(hp.alpha, hp.beta);
  m.xi.resize(kappa);
  m.sigma.resize(kappa);
  for (int i = 0; i < kappa; ++i) {
    m.xi[i] = 1 + static_cast<int>(rng.uniform_int(grid.size()));
    m.sigma[i] = sample_inverse_wishart(hp.psi, hp.delta, rng);
  }
  return m;
}

void gibbs_sweep(ModelParams& params, const SufficientStats& st, const Hyperparams& hp,
                 const SpatialGrid& grid, RngStream& rng) {
  if (st.kappa != params.kappa) throw data_error("gibbs sweep: state count mismatch");
  for (int i = 1; i <= params.kappa; ++i) {
    Vec row = sample_transition_row(st, i, hp, rng);
    for (int j = 0; j < params.kappa; ++j) params.P(i - 1, j) = row[j];
  }
  for (int i = 1; i <= params.kappa; ++i) {
    params.sigma[i - 1] = sample_sigma(st, i, params.xi[i - 1], hp, grid, rng);
    params.xi[i - 1] = sample_xi(st, i, params.sigma[i - 1], grid, rng);
  }
  for (int i = 1; i <= params.kappa; ++i) {
    Vec row = sample_lambda_row(st, i, hp, params.dt, rng);
    for (int n = 0; n < params.n_cells; ++n) params.lambda(i - 1, n) = row[n];
  }
}

}  // namespace ophmm
