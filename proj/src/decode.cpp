#include "ophmm/decode.hpp"

#include <cmath>

namespace ophmm {

Mat op_position_posterior(const ModelParams& m, const SpatialGrid& grid,
                          const std::vector<std::vector<int>>& counts) {
  AugmentedChain chain(m.P);
  Mat emit = emission_log_table(m, grid, counts, {});
  ForwardResult fr = forward_pass(chain, emit);
  BackwardResult br = backward_pass(chain, emit);
  Mat sm = smooth(chain, fr, br);
  Mat state_post = state_marginals(chain, sm);

  Mat pos_table(m.kappa, grid.size());
  for (int i = 0; i < m.kappa; ++i) {
    Vec p = position_probs(grid, m.xi[i], m.sigma[i]);
    for (int x = 0; x < grid.size(); ++x) pos_table(i, x) = p[x];
  }

  const std::size_t T = counts.size();
  Mat out(T, grid.size(), 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    // state_post row t+1 corresponds to observation bin t.
    for (int i = 0; i < m.kappa; ++i) {
      double w = state_post(t + 1, i);
      if (w == 0.0) continue;
      for (int x = 0; x < grid.size(); ++x) out(t, x) += w * pos_table(i, x);
    }
  }
  return out;
}

std::vector<int> op_viterbi_positions(const ModelParams& m, const SpatialGrid& grid,
                                      const std::vector<std::vector<int>>& counts) {
  AugmentedChain chain(m.P);
  const int M = grid.size();
  const int n = chain.size();
  const std::size_t T = counts.size();
  if (T == 0) return {};

  Mat spike_emit = emission_log_table(m, grid, counts, {});
  Mat log_pos = position_log_prob_table(m, grid);

  // value[t] is an M x n table: the score of the best position history
  // ending at position v with augmented state j at time t+1 (1-based).
  std::vector<Mat> value(T, Mat(M, n, NEG_INF));

  // t = 1: transition out of the fixed initial state.
  const int init = AugmentedChain::index(1, 1);
  for (int j = 0; j < n; ++j) {
    double p = chain.prob(init, j);
    if (p <= 0.0) continue;
    int s = chain.state_of(j);
    double base = std::log(p) + spike_emit(0, s - 1);
    for (int v = 0; v < M; ++v) value[0](v, j) = base + log_pos(s - 1, v);
  }

  // Accumulator for logsumexp over predecessors, reused per (u, j).
  Vec terms;
  terms.reserve(n);
  for (std::size_t t = 1; t < T; ++t) {
    const Mat& prev = value[t - 1];
    Mat& cur = value[t];
    // best_in(j) = max_u logsumexp_i [log P~(i, j) + prev(u, i)]
    Vec best_in(n, NEG_INF);
    for (int u = 0; u < M; ++u) {
      for (int j = 0; j < n; ++j) {
        int s_to = chain.state_of(j), k_to = chain.seen_of(j);
        terms.clear();
        for (int sp = 1; sp <= k_to; ++sp) {
          int i = AugmentedChain::index(sp, k_to);
          double p = chain.base(sp, s_to);
          if (p > 0.0 && prev(u, i) != NEG_INF) terms.push_back(std::log(p) + prev(u, i));
        }
        if (s_to == k_to && k_to >= 2) {
          for (int sp = 1; sp <= k_to - 1; ++sp) {
            int i = AugmentedChain::index(sp, k_to - 1);
            double p = chain.tail(sp, k_to - 1);
            if (p > 0.0 && prev(u, i) != NEG_INF) terms.push_back(std::log(p) + prev(u, i));
          }
        }
        best_in[j] = std::max(best_in[j], logsumexp(terms));
      }
    }
    for (int j = 0; j < n; ++j) {
      if (best_in[j] == NEG_INF) continue;
      int s = chain.state_of(j);
      double base = best_in[j] + spike_emit(t, s - 1);
      for (int v = 0; v < M; ++v) cur(v, j) = base + log_pos(s - 1, v);
    }
  }

  std::vector<int> path(T, 1);
  // Final position: argmax_v sum_j V_T(v, j).
  {
    double best = NEG_INF;
    for (int v = 0; v < M; ++v) {
      terms.clear();
      for (int j = 0; j < n; ++j)
        if (value[T - 1](v, j) != NEG_INF) terms.push_back(value[T - 1](v, j));
      double score = logsumexp(terms);
      if (score > best + 1e-15) {
        best = score;
        path[T - 1] = v + 1;
      }
    }
    if (best == NEG_INF) throw numerical_error("position viterbi: all trajectories vanished");
  }

  // Backward trace conditioning on the next decoded position.
  Vec inner;
  inner.reserve(n);
  for (std::size_t t = T - 1; t-- > 0;) {
    int x_next = path[t + 1];
    double best = NEG_INF;
    int arg = 1;
    for (int v = 0; v < M; ++v) {
      terms.clear();
      for (int j = 0; j < n; ++j) {
        int s_to = chain.state_of(j), k_to = chain.seen_of(j);
        // inner = logsumexp_i [log P~(i, j) + V_t(v, i)]
        inner.clear();
        for (int sp = 1; sp <= k_to; ++sp) {
          int i = AugmentedChain::index(sp, k_to);
          double p = chain.base(sp, s_to);
          if (p > 0.0 && value[t](v, i) != NEG_INF) inner.push_back(std::log(p) + value[t](v, i));
        }
        if (s_to == k_to && k_to >= 2) {
          for (int sp = 1; sp <= k_to - 1; ++sp) {
            int i = AugmentedChain::index(sp, k_to - 1);
            double p = chain.tail(sp, k_to - 1);
            if (p > 0.0 && value[t](v, i) != NEG_INF) inner.push_back(std::log(p) + value[t](v, i));
          }
        }
        if (inner.empty()) continue;
        int s = chain.state_of(j);
        terms.push_back(log_pos(s - 1, x_next - 1) + logsumexp(inner));
      }
      double score = logsumexp(terms);
      if (score > best + 1e-15) {
        best = score;
        arg = v + 1;
      }
    }
    path[t] = arg;
  }
  return path;
}

namespace {

void accumulate_maps(const BinnedDataset& train, const SpatialGrid& grid, Mat& spikes, Vec& occ) {
  if (!train.has_positions()) throw data_error("baseline fit requires tracked training data");
  spikes = Mat(grid.size(), train.n_cells, 0.0);
  occ.assign(grid.size(), 0.0);
  for (int t = 0; t < train.T(); ++t) {
    int x = train.positions[t];
    if (x < 1 || x > grid.size()) throw data_error("baseline fit: label out of range");
    occ[x - 1] += 1.0;
    for (int n = 0; n < train.n_cells; ++n) spikes(x - 1, n) += train.counts[t][n];
  }
}

Mat smoothed_rates(const Mat& spikes, const Vec& occ, double dt) {
  // (spikes + 1/2) / (occupancy * dt + dt): one phantom bin of exposure so
  // unvisited positions get a finite moderate rate.
  Mat rates(spikes.rows(), spikes.cols());
  for (std::size_t x = 0; x < spikes.rows(); ++x)
    for (std::size_t n = 0; n < spikes.cols(); ++n)
      rates(x, n) = (spikes(x, n) + 0.5) / (occ[x] * dt + dt);
  return rates;
}

// log p(y_t | position x) under independent Poissons, up to the shared
// log y! term which cancels in per-bin normalisation.
double poisson_score(const Mat& rates, int x, std::span<const int> counts, double dt) {
  double e = 0.0;
  for (std::size_t n = 0; n < rates.cols(); ++n) {
    double mu = dt * rates(x, n);
    int y = counts[n];
    if (mu == 0.0) {
      if (y > 0) return NEG_INF;
      continue;
    }
    e += -mu + y * std::log(mu);
  }
  return e;
}

}  // namespace

BdModel fit_bd(const BinnedDataset& train, const SpatialGrid& grid) {
  Mat spikes;
  Vec occ;
  accumulate_maps(train, grid, spikes, occ);
  BdModel bd;
  bd.dt = train.dt;
  bd.rates = smoothed_rates(spikes, occ, train.dt);
  bd.log_prior.assign(grid.size(), 0.0);
  double total = 0.0;
  for (int x = 0; x < grid.size(); ++x) total += occ[x] + 0.5;
  for (int x = 0; x < grid.size(); ++x) bd.log_prior[x] = std::log((occ[x] + 0.5) / total);
  return bd;
}

Mat bd_position_posterior(const BdModel& bd, const std::vector<std::vector<int>>& counts,
                          double dt) {
  const std::size_t T = counts.size();
  const std::size_t M = bd.rates.rows();
  Mat out(T, M);
  Vec logp(M);
  for (std::size_t t = 0; t < T; ++t) {
    double mx = NEG_INF;
    for (std::size_t x = 0; x < M; ++x) {
      logp[x] = bd.log_prior[x] + poisson_score(bd.rates, x, counts[t], dt);
      mx = std::max(mx, logp[x]);
    }
    if (mx == NEG_INF) throw numerical_error("bd decode: zero posterior in a bin");
    double total = 0.0;
    for (std::size_t x = 0; x < M; ++x) {
      out(t, x) = std::exp(logp[x] - mx);
      total += out(t, x);
    }
    for (std::size_t x = 0; x < M; ++x) out(t, x) /= total;
  }
  return out;
}

std::vector<int> bd_map_positions(const BdModel& bd, const std::vector<std::vector<int>>& counts,
                                  double dt) {
  Mat post = bd_position_posterior(bd, counts, dt);
  std::vector<int> labels(post.rows(), 1);
  for (std::size_t t = 0; t < post.rows(); ++t) {
    double best = -1.0;
    for (std::size_t x = 0; x < post.cols(); ++x)
      if (post(t, x) > best + 1e-15) {
        best = post(t, x);
        labels[t] = static_cast<int>(x) + 1;
      }
  }
  return labels;
}

LpModel fit_lp(const BinnedDataset& train, const SpatialGrid& grid, double bandwidth) {
  Mat spikes;
  Vec occ;
  accumulate_maps(train, grid, spikes, occ);
  LpModel lp;
  lp.dt = train.dt;
  lp.rates = smoothed_rates(spikes, occ, train.dt);
  if (bandwidth <= 0.0) bandwidth = 2.0 * grid.cell_size();
  const int M = grid.size();
  lp.log_trans = Mat(M, M);
  for (int x = 1; x <= M; ++x) {
    Vec row(M);
    double mx = NEG_INF;
    for (int y = 1; y <= M; ++y) {
      double d = grid.distance(x, y);
      row[y - 1] = -0.5 * d * d / (bandwidth * bandwidth);
      mx = std::max(mx, row[y - 1]);
    }
    double total = 0.0;
    for (int y = 0; y < M; ++y) {
      row[y] = std::exp(row[y] - mx);
      total += row[y];
    }
    for (int y = 0; y < M; ++y) lp.log_trans(x - 1, y) = std::log(row[y] / total);
  }
  return lp;
}

std::vector<int> lp_viterbi_positions(const LpModel& lp,
                                      const std::vector<std::vector<int>>& counts, double dt) {
  const std::size_t T = counts.size();
  const int M = static_cast<int>(lp.rates.rows());
  if (T == 0) return {};
  Mat back(T, M, -1.0);
  Vec cur(M), nxt(M);
  for (int x = 0; x < M; ++x)
    cur[x] = -std::log(static_cast<double>(M)) + poisson_score(lp.rates, x, counts[0], dt);
  for (std::size_t t = 1; t < T; ++t) {
    for (int y = 0; y < M; ++y) {
      double best = NEG_INF;
      int arg = -1;
      for (int x = 0; x < M; ++x) {
        if (cur[x] == NEG_INF) continue;
        double v = cur[x] + lp.log_trans(x, y);
        if (v > best) {
          best = v;
          arg = x;
        }
      }
      double em = poisson_score(lp.rates, y, counts[t], dt);
      nxt[y] = (arg < 0 || em == NEG_INF) ? NEG_INF : best + em;
      back(t, y) = arg;
    }
    std::swap(cur, nxt);
  }
  std::vector<int> path(T, 1);
  double best = NEG_INF;
  for (int x = 0; x < M; ++x)
    if (cur[x] > best + 1e-15) {
      best = cur[x];
      path[T - 1] = x + 1;
    }
  if (best == NEG_INF) throw numerical_error("lp decode: all paths vanished");
  for (std::size_t t = T - 1; t-- > 0;)
    path[t] = static_cast<int>(back(t + 1, path[t + 1] - 1)) + 1;
  return path;
}

DecodeMetrics decoding_metrics(const std::vector<int>& decoded, const std::vector<int>& truth,
                               const SpatialGrid& grid, const Mat* posterior) {
  if (decoded.size() != truth.size()) throw data_error("decoding metrics: length mismatch");
  if (decoded.empty()) throw data_error("decoding metrics: empty trajectories");
  Vec errors(decoded.size());
  for (std::size_t t = 0; t < decoded.size(); ++t)
    errors[t] = grid.distance(decoded[t], truth[t]);
  std::sort(errors.begin(), errors.end());
  DecodeMetrics m;
  std::size_t n = errors.size();
  m.median_geodesic_error =
      (n % 2 == 1) ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
  if (posterior) {
    if (posterior->rows() != truth.size())
      throw data_error("decoding metrics: posterior length mismatch");
    double acc = 0.0;
    for (std::size_t t = 0; t < truth.size(); ++t) acc += (*posterior)(t, truth[t] - 1);
    m.mean_posterior_at_truth = acc / static_cast<double>(truth.size());
  } else {
    m.mean_posterior_at_truth = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

}  // namespace ophmm
