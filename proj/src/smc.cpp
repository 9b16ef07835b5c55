#include "ophmm/smc.hpp"

#include <cmath>

namespace ophmm {

namespace {

// Stream purposes, kept distinct so derived RNG streams never collide.
constexpr std::uint64_t STREAM_INIT = 1;
constexpr std::uint64_t STREAM_RESAMPLE = 2;
constexpr std::uint64_t STREAM_MOVE = 3;

struct PreparedData {
  const BinnedDataset* data = nullptr;
  std::vector<std::vector<std::pair<int, int>>> nonzero;  // per bin: (cell, count)
  Vec lgamma_term;                                        // per bin: sum_n log y!
};

PreparedData prepare(const BinnedDataset& data) {
  PreparedData p;
  p.data = &data;
  p.nonzero.resize(data.T());
  p.lgamma_term.assign(data.T(), 0.0);
  for (int t = 0; t < data.T(); ++t) {
    for (int n = 0; n < data.n_cells; ++n) {
      int y = data.counts[t][n];
      if (y < 0) throw data_error("negative spike count");
      if (y > 0) {
        p.nonzero[t].push_back({n, y});
        p.lgamma_term[t] += std::lgamma(static_cast<double>(y) + 1.0);
      }
    }
  }
  return p;
}

struct Particle {
  ModelParams theta;
  AugmentedChain chain;
  Mat log_pos;    // kappa x M, empty when untracked
  Vec rate_mass;  // per state: dt * sum_n lambda
  Mat log_rate;   // kappa x C: log(dt * lambda)
  Vec fwd;        // scaled forward slice at the current time
  double log_lik = 0.0;
  double log_w = 0.0;

  explicit Particle(ModelParams t0, const SpatialGrid& grid, bool tracked)
      : theta(std::move(t0)), chain(theta.P) {
    refresh_caches(grid, tracked);
    fwd = chain.initial_slice();
  }

  void refresh_caches(const SpatialGrid& grid, bool tracked) {
    chain = AugmentedChain(theta.P);
    rate_mass.assign(theta.kappa, 0.0);
    log_rate = Mat(theta.kappa, theta.n_cells);
    for (int s = 0; s < theta.kappa; ++s) {
      for (int n = 0; n < theta.n_cells; ++n) {
        double mu = theta.dt * theta.lambda(s, n);
        rate_mass[s] += mu;
        log_rate(s, n) = mu > 0.0 ? std::log(mu) : NEG_INF;
      }
    }
    if (tracked) log_pos = position_log_prob_table(theta, grid);
  }

  // log p(obs_t | state) for every base state, t 1-based.
  void emission_row(const PreparedData& pd, int t, Vec& out) const {
    const auto& nz = pd.nonzero[t - 1];
    const bool tracked = pd.data->has_positions();
    int x = tracked ? pd.data->positions[t - 1] : 0;
    for (int s = 0; s < theta.kappa; ++s) {
      double e = -rate_mass[s] - pd.lgamma_term[t - 1];
      for (const auto& [n, y] : nz) e += y * log_rate(s, n);
      if (tracked) e += log_pos(s, x - 1);
      out[s] = e;
    }
  }

  Mat emission_table_prefix(const PreparedData& pd, int t_end) const {
    Mat table(t_end, theta.kappa);
    Vec row(theta.kappa);
    for (int t = 1; t <= t_end; ++t) {
      emission_row(pd, t, row);
      for (int s = 0; s < theta.kappa; ++s) table(t - 1, s) = row[s];
    }
    return table;
  }
};

// One particle rejuvenation at time t: sample an augmented path from the
// current parameters' posterior, refresh sufficient statistics from it, and
// take one Gibbs sweep through the full conditionals; the forward slice and
// cumulative likelihood are then rebuilt under the new parameters.
void move_particle(Particle& p, const PreparedData& pd, const BinnedDataset& prefix,
                   const SpatialGrid& grid, const Hyperparams& hp, int t, RngStream rng) {
  Mat emit = p.emission_table_prefix(pd, t);
  ForwardResult fr = forward_pass(p.chain, emit);
  std::vector<int> path = sample_state_path(p.chain, fr, rng);
  SufficientStats st = stats_from_path(p.chain, path, prefix, grid.size());
  gibbs_sweep(p.theta, st, hp, grid, rng);
  p.refresh_caches(grid, pd.data->has_positions());

  Mat emit_new = p.emission_table_prefix(pd, t);
  Vec cur = p.chain.initial_slice(), nxt(p.chain.size());
  double ll = 0.0;
  for (int u = 1; u <= t; ++u) {
    std::span<const double> em(emit_new.row(u - 1), emit_new.cols());
    double inc = p.chain.forward_step(cur, em, nxt);
    if (inc == NEG_INF) throw numerical_error("move: zero likelihood under refreshed parameters");
    std::swap(cur, nxt);
    ll += inc;
  }
  p.fwd = cur;
  p.log_lik = ll;
}

}  // namespace

void SmcConfig::validate() const {
  if (n_particles < 2) throw config_error("smc: need at least two particles");
  if (ess_threshold_frac <= 0.0 || ess_threshold_frac > 1.0)
    throw config_error("smc: ESS threshold fraction must be in (0, 1]");
  if (subpop_floor_frac <= 0.0 || subpop_floor_frac > 1.0)
    throw config_error("smc: subpopulation floor fraction must be in (0, 1]");
  if (threads < 1) throw config_error("smc: thread count must be positive");
}

double effective_sample_size(std::span<const double> w) {
  const double h = static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w) var += (v - 1.0) * (v - 1.0);
  var /= h;
  return h / (1.0 + var);
}

FitResult fit_smc(const BinnedDataset& data, const SpatialGrid& grid, const Hyperparams& hp,
                  const SmcConfig& cfg) {
  cfg.validate();
  hp.validate();
  if (data.T() < 1) throw data_error("smc: empty dataset");
  const int H = cfg.n_particles;
  const int kappa_bar = hp.kappa_bar;
  const double ess_star = cfg.ess_threshold_frac * H;
  const int h_star = std::max(1, static_cast<int>(std::llround(cfg.subpop_floor_frac * H)));
  const bool tracked = data.has_positions();

  PreparedData pd = prepare(data);

  // Prior initialisation, stratified over model sizes so every
  // subpopulation starts at its protected share.
  std::vector<Particle> particles;
  particles.reserve(H);
  for (int h = 0; h < H; ++h) {
    int kappa = 1 + h % kappa_bar;
    RngStream rng = RngStream::derive(cfg.seed, {STREAM_INIT, static_cast<std::uint64_t>(h)});
    particles.emplace_back(sample_prior(hp, kappa, data.n_cells, data.dt, grid, rng), grid,
                           tracked);
  }

  FitResult result;
  Vec w_mean_one(H);
  BinnedDataset prefix;  // shared truncated view rebuilt at each move step
  prefix.dt = data.dt;
  prefix.n_cells = data.n_cells;

  for (int t = 1; t <= data.T(); ++t) {
    parallel_for(H, cfg.threads, [&](std::size_t h) {
      Particle& p = particles[h];
      Vec em(p.theta.kappa), nxt(p.chain.size());
      p.emission_row(pd, t, em);
      double inc = p.chain.forward_step(p.fwd, em, nxt);
      if (inc == NEG_INF) {
        p.log_w = NEG_INF;
      } else {
        p.fwd = nxt;
        p.log_lik += inc;
        p.log_w += inc;
      }
    });

    // Normalise weights to mean one.
    double mx = NEG_INF;
    for (int h = 0; h < H; ++h) mx = std::max(mx, particles[h].log_w);
    if (mx == NEG_INF) throw numerical_error("smc: every particle weight vanished");
    double total = 0.0;
    for (int h = 0; h < H; ++h) total += std::exp(particles[h].log_w - mx);
    double log_mean = mx + std::log(total / H);
    for (int h = 0; h < H; ++h) {
      particles[h].log_w -= log_mean;
      w_mean_one[h] = std::exp(particles[h].log_w);
    }

    double ess = effective_sample_size(w_mean_one);
    Vec p_kappa(kappa_bar, 0.0);
    for (int h = 0; h < H; ++h) p_kappa[particles[h].theta.kappa - 1] += w_mean_one[h] / H;

    bool resample = ess < ess_star;
    if (cfg.record_diagnostics) result.diagnostics.push_back({t, ess, resample, p_kappa});
    if (!resample) continue;
    ++result.n_resamples;

    // --- Resampling with per-model-size protection -----------------------
    RngStream rng = RngStream::derive(cfg.seed, {STREAM_RESAMPLE, static_cast<std::uint64_t>(t)});
    Vec v(H);
    for (int h = 0; h < H; ++h) v[h] = w_mean_one[h] / H;  // sums to one

    std::vector<char> discriminated(kappa_bar + 1, 0);
    std::vector<std::vector<int>> members(kappa_bar + 1);
    for (int h = 0; h < H; ++h) members[particles[h].theta.kappa].push_back(h);
    int protected_slots = 0;
    for (int k = 1; k <= kappa_bar; ++k) {
      if (members[k].empty()) continue;
      if (p_kappa[k - 1] > 0.0 && p_kappa[k - 1] * H < h_star) {
        discriminated[k] = 1;
        protected_slots += h_star;
      }
    }
    if (protected_slots > H)
      throw numerical_error("smc: protected slots exceed population (floor too high)");

    std::vector<int> source(H, -1);
    Vec new_log_w(H, 0.0);
    int slot = 0;
    for (int k = 1; k <= kappa_bar; ++k) {
      if (!discriminated[k]) continue;
      Vec sub(members[k].size());
      for (std::size_t i = 0; i < members[k].size(); ++i) sub[i] = v[members[k][i]];
      double lw = std::log(p_kappa[k - 1] * H / h_star);
      for (int i = 0; i < h_star; ++i) {
        source[slot] = members[k][rng.categorical(sub)];
        new_log_w[slot] = lw;
        ++slot;
      }
    }

    // Residual resampling over the unprotected pool, copies at weight one.
    int R = H - slot;
    if (R > 0) {
      std::vector<int> pool;
      double pool_mass = 0.0;
      for (int h = 0; h < H; ++h) {
        if (discriminated[particles[h].theta.kappa]) continue;
        pool.push_back(h);
        pool_mass += v[h];
      }
      if (pool.empty() || pool_mass <= 0.0)
        throw numerical_error("smc: no particles available for residual resampling");
      Vec frac(pool.size());
      int assigned = 0;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        double expect = R * v[pool[i]] / pool_mass;
        int n = static_cast<int>(std::floor(expect));
        frac[i] = expect - n;
        for (int cpy = 0; cpy < n && slot < H; ++cpy) source[slot++] = pool[i];
        assigned += n;
      }
      for (int i = assigned; i < R; ++i) source[slot++] = pool[rng.categorical(frac)];
    }

    std::vector<Particle> next;
    next.reserve(H);
    for (int h = 0; h < H; ++h) {
      next.push_back(particles[source[h]]);
      next.back().log_w = new_log_w[h];
    }
    particles = std::move(next);

    // Renormalise to mean one.
    double tot = 0.0;
    for (int h = 0; h < H; ++h) tot += std::exp(particles[h].log_w);
    double lm = std::log(tot / H);
    for (int h = 0; h < H; ++h) particles[h].log_w -= lm;

    // --- Move: one Gibbs sweep per particle over a fresh path ------------
    prefix.counts.assign(data.counts.begin(), data.counts.begin() + t);
    if (tracked) prefix.positions.assign(data.positions.begin(), data.positions.begin() + t);
    parallel_for(H, cfg.threads, [&](std::size_t h) {
      RngStream mrng = RngStream::derive(
          cfg.seed, {STREAM_MOVE, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(h)});
      move_particle(particles[h], pd, prefix, grid, hp, t, mrng);
    });
  }

  // --- Canonical labelling --------------------------------------------------
  // Particles that explain the data equally well can still disagree on state
  // labels: the initial state never emits an observation, so a lineage whose
  // paths leave it immediately carries every regime one index higher than a
  // lineage whose paths linger. Averaging such particles together smears the
  // per-state estimates. Relabelling each particle by the appearance order of
  // its own MAP path (observation steps only) aligns the population.
  parallel_for(H, cfg.threads, [&](std::size_t h) {
    Particle& p = particles[h];
    if (p.theta.kappa == 1) return;
    Mat emit = p.emission_table_prefix(pd, data.T());
    std::vector<int> aug = viterbi_path(p.chain, emit);
    std::vector<int> base(aug.size() - 1);
    for (std::size_t u = 1; u < aug.size(); ++u)
      base[u - 1] = p.chain.state_of(aug[u]);
    p.theta = relabel_by_appearance(p.theta, base).params;
  });

  // --- Point estimates ----------------------------------------------------
  double tot = 0.0;
  for (int h = 0; h < H; ++h) tot += std::exp(particles[h].log_w);
  std::vector<ParticleSummary> summaries;
  summaries.reserve(H);
  for (int h = 0; h < H; ++h)
    summaries.push_back({particles[h].theta, std::exp(particles[h].log_w) * H / tot});

  result.params_full = estimate_params_full(summaries, hp, grid, kappa_bar, data.n_cells, data.dt);
  result.kappa_hat = estimate_kappa(result.params_full, data, grid, &result.k_posterior);
  result.params = truncate_model(result.params_full, result.kappa_hat);
  return result;
}

ModelParams estimate_params_full(const std::vector<ParticleSummary>& particles,
                                 const Hyperparams& hp, const SpatialGrid& grid, int kappa_bar,
                                 int n_cells, double dt) {
  ModelParams full;
  full.kappa = kappa_bar;
  full.n_cells = n_cells;
  full.dt = dt;
  full.P = Mat(kappa_bar, kappa_bar, 0.0);
  full.lambda = Mat(kappa_bar, n_cells, 0.0);
  full.xi.assign(kappa_bar, 1);
  full.sigma.assign(kappa_bar, hp.psi.scaled(1.0 / (hp.delta - 3.0)));

  for (int i = 1; i <= kappa_bar; ++i) {
    double mass = 0.0;
    for (const auto& ps : particles)
      if (ps.theta.kappa >= i) mass += ps.weight;
    if (mass <= 0.0) {
      // No particle carries state i: prior-mean placeholders.
      for (int j = 0; j < kappa_bar; ++j) full.P(i - 1, j) = 1.0 / kappa_bar;
      for (int n = 0; n < n_cells; ++n) full.lambda(i - 1, n) = hp.alpha / hp.beta;
      continue;
    }
    // Transition row, zero-padded to kappa_bar then renormalised.
    Vec row(kappa_bar, 0.0);
    for (const auto& ps : particles) {
      if (ps.theta.kappa < i) continue;
      for (int j = 0; j < ps.theta.kappa; ++j) row[j] += ps.weight * ps.theta.P(i - 1, j);
    }
    double rs = 0.0;
    for (double x : row) rs += x;
    for (int j = 0; j < kappa_bar; ++j) full.P(i - 1, j) = rs > 0.0 ? row[j] / rs : 1.0 / kappa_bar;

    for (int n = 0; n < n_cells; ++n) {
      double acc = 0.0;
      for (const auto& ps : particles)
        if (ps.theta.kappa >= i) acc += ps.weight * ps.theta.lambda(i - 1, n);
      full.lambda(i - 1, n) = acc / mass;
    }

    Sym2 sig{0.0, 0.0, 0.0};
    for (const auto& ps : particles) {
      if (ps.theta.kappa < i) continue;
      sig.xx += ps.weight * ps.theta.sigma[i - 1].xx;
      sig.xy += ps.weight * ps.theta.sigma[i - 1].xy;
      sig.yy += ps.weight * ps.theta.sigma[i - 1].yy;
    }
    full.sigma[i - 1] = spd_project(sig.scaled(1.0 / mass));

    // Weighted Frechet point of the centres under squared geodesic distance.
    int best = 1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int x = 1; x <= grid.size(); ++x) {
      double cost = 0.0;
      for (const auto& ps : particles) {
        if (ps.theta.kappa < i) continue;
        double d = grid.distance(ps.theta.xi[i - 1], x);
        cost += ps.weight * d * d;
      }
      if (cost < best_cost - 1e-12) {
        best_cost = cost;
        best = x;
      }
    }
    full.xi[i - 1] = best;
  }
  return full;
}

int estimate_kappa(const ModelParams& params_full, const BinnedDataset& data,
                   const SpatialGrid& grid, Vec* k_post) {
  AugmentedChain chain(params_full.P);
  Mat emit = emission_log_table(params_full, grid, data.counts, data.positions);
  ForwardResult fr = forward_pass(chain, emit);
  BackwardResult br = backward_pass(chain, emit);
  Mat sm = smooth(chain, fr, br);
  Vec kp = k_posterior(chain, sm);
  int arg = 1;
  for (int k = 2; k <= params_full.kappa; ++k)
    if (kp[k - 1] > kp[arg - 1] + 1e-15) arg = k;
  if (k_post) *k_post = kp;
  return arg;
}

ModelParams truncate_model(const ModelParams& full, int kappa_hat) {
  if (kappa_hat < 1 || kappa_hat > full.kappa)
    throw data_error("truncate_model: invalid target size");
  ModelParams m;
  m.kappa = kappa_hat;
  m.n_cells = full.n_cells;
  m.dt = full.dt;
  m.P = Mat(kappa_hat, kappa_hat);
  for (int i = 0; i < kappa_hat; ++i) {
    double rs = 0.0;
    for (int j = 0; j < kappa_hat; ++j) rs += full.P(i, j);
    for (int j = 0; j < kappa_hat; ++j)
      m.P(i, j) = rs > 0.0 ? full.P(i, j) / rs : 1.0 / kappa_hat;
  }
  m.lambda = Mat(kappa_hat, full.n_cells);
  for (int i = 0; i < kappa_hat; ++i)
    for (int n = 0; n < full.n_cells; ++n) m.lambda(i, n) = full.lambda(i, n);
  m.xi.assign(full.xi.begin(), full.xi.begin() + kappa_hat);
  m.sigma.assign(full.sigma.begin(), full.sigma.begin() + kappa_hat);
  return m;
}

Sym2 spd_project(const Sym2& s, double floor_frac) {
  Sym2 sym = s;  // storage is symmetric by construction
  double lo, hi;
  sym.eigenvalues(lo, hi);
  double floor = floor_frac * std::max(sym.trace(), 0.0);
  if (floor <= 0.0) floor = floor_frac;
  if (lo >= floor) return sym;
  // Eigenvectors of a symmetric 2x2: rotate, clamp, rotate back.
  double clo = std::max(lo, floor), chi = std::max(hi, floor);
  if (sym.xy == 0.0) {
    if (sym.xx <= sym.yy) return {clo, 0.0, chi};
    return {chi, 0.0, clo};
  }
  // Eigenvector for hi: (xy, hi - xx), normalised.
  double vx = sym.xy, vy = hi - sym.xx;
  double nv = std::hypot(vx, vy);
  vx /= nv;
  vy /= nv;
  // S' = chi v v' + clo u u' with u orthogonal to v.
  double ux = -vy, uy = vx;
  return {chi * vx * vx + clo * ux * ux, chi * vx * vy + clo * ux * uy,
          chi * vy * vy + clo * uy * uy};
}

}  // namespace ophmm
