#include "ophmm/hmm.hpp"

#include <cmath>

namespace ophmm {

Mat emission_log_table(const ModelParams& m, const SpatialGrid& grid,
                       const std::vector<std::vector<int>>& counts,
                       const std::vector<int>& positions) {
  const std::size_t T = counts.size();
  const bool with_pos = !positions.empty();
  if (with_pos && positions.size() != T)
    throw data_error("emission table: counts/positions length mismatch");
  Mat log_pos;
  if (with_pos) log_pos = position_log_prob_table(m, grid);
  Mat table(T, m.kappa);
  for (std::size_t t = 0; t < T; ++t) {
    for (int s = 1; s <= m.kappa; ++s) {
      double v = spike_log_lik(m, s, counts[t]);
      if (with_pos) {
        int x = positions[t];
        if (x < 1 || x > grid.size()) throw data_error("position label out of range");
        v += log_pos(s - 1, x - 1);
      }
      table(t, s - 1) = v;
    }
  }
  return table;
}

ForwardResult forward_pass(const AugmentedChain& chain, const Mat& log_emit) {
  const std::size_t T = log_emit.rows();
  ForwardResult out;
  out.slices.resize(T + 1);
  out.log_lik.assign(T + 1, 0.0);
  out.slices[0] = chain.initial_slice();
  Vec next(chain.size());
  for (std::size_t t = 1; t <= T; ++t) {
    std::span<const double> em(log_emit.row(t - 1), log_emit.cols());
    double inc = chain.forward_step(out.slices[t - 1], em, next);
    if (inc == NEG_INF)
      throw numerical_error("forward pass: zero likelihood at step " + std::to_string(t));
    out.slices[t] = next;
    out.log_lik[t] = out.log_lik[t - 1] + inc;
  }
  return out;
}

BackwardResult backward_pass(const AugmentedChain& chain, const Mat& log_emit) {
  const std::size_t T = log_emit.rows();
  BackwardResult out;
  out.slices.resize(T + 1);
  out.log_scale.assign(T + 1, 0.0);
  // beta_T = 1 for every state; stored normalised.
  out.slices[T].assign(chain.size(), 1.0 / chain.size());
  out.log_scale[T] = std::log(static_cast<double>(chain.size()));
  Vec prev(chain.size());
  for (std::size_t t = T; t-- > 0;) {
    std::span<const double> em(log_emit.row(t), log_emit.cols());
    double inc = chain.backward_step(out.slices[t + 1], em, prev);
    if (inc == NEG_INF)
      throw numerical_error("backward pass: zero likelihood at step " + std::to_string(t + 1));
    out.slices[t] = prev;
    out.log_scale[t] = out.log_scale[t + 1] + inc;
  }
  return out;
}

Mat smooth(const AugmentedChain& chain, const ForwardResult& fwd, const BackwardResult& bwd) {
  const std::size_t rows = fwd.slices.size();
  if (bwd.slices.size() != rows) throw data_error("smooth: pass length mismatch");
  Mat out(rows, chain.size());
  for (std::size_t t = 0; t < rows; ++t) {
    double total = 0.0;
    for (int i = 0; i < chain.size(); ++i) {
      double v = fwd.slices[t][i] * bwd.slices[t][i];
      out(t, i) = v;
      total += v;
    }
    if (total <= 0.0) throw numerical_error("smooth: vanished posterior at step " + std::to_string(t));
    for (int i = 0; i < chain.size(); ++i) out(t, i) /= total;
  }
  return out;
}

Mat state_marginals(const AugmentedChain& chain, const Mat& smoothed) {
  Mat out(smoothed.rows(), chain.kappa(), 0.0);
  for (std::size_t t = 0; t < smoothed.rows(); ++t)
    for (int idx = 0; idx < chain.size(); ++idx)
      out(t, chain.state_of(idx) - 1) += smoothed(t, idx);
  return out;
}

Vec k_posterior(const AugmentedChain& chain, const Mat& smoothed) {
  Vec out(chain.kappa(), 0.0);
  const std::size_t last = smoothed.rows() - 1;
  for (int idx = 0; idx < chain.size(); ++idx)
    out[chain.seen_of(idx) - 1] += smoothed(last, idx);
  return out;
}

std::vector<int> sample_state_path(const AugmentedChain& chain, const ForwardResult& fwd,
                                   RngStream& rng) {
  const std::size_t T = fwd.slices.size() - 1;
  std::vector<int> path(T + 1);
  path[T] = static_cast<int>(rng.categorical(fwd.slices[T]));
  Vec w(chain.size());
  for (std::size_t t = T; t-- > 0;) {
    for (int i = 0; i < chain.size(); ++i) w[i] = fwd.slices[t][i] * chain.prob(i, path[t + 1]);
    path[t] = static_cast<int>(rng.categorical(w));
  }
  return path;
}

std::vector<int> viterbi_path(const AugmentedChain& chain, const Mat& log_emit) {
  const std::size_t T = log_emit.rows();
  const int n = chain.size();
  Vec cur(n, NEG_INF), nxt(n, NEG_INF);
  cur[AugmentedChain::index(1, 1)] = 0.0;
  Mat back(T + 1, n, -1.0);
  for (std::size_t t = 1; t <= T; ++t) {
    std::fill(nxt.begin(), nxt.end(), NEG_INF);
    for (int to = 0; to < n; ++to) {
      int s_to = chain.state_of(to), k_to = chain.seen_of(to);
      double em = log_emit(t - 1, s_to - 1);
      if (em == NEG_INF) continue;
      double best = NEG_INF;
      int arg = -1;
      // Within-seen predecessors share the destination's k block.
      for (int sp = 1; sp <= k_to; ++sp) {
        int from = AugmentedChain::index(sp, k_to);
        double p = chain.base(sp, s_to);
        if (p <= 0.0 || cur[from] == NEG_INF) continue;
        double v = cur[from] + std::log(p);
        if (v > best) {
          best = v;
          arg = from;
        }
      }
      // New-state predecessor block.
      if (s_to == k_to && k_to >= 2) {
        for (int sp = 1; sp <= k_to - 1; ++sp) {
          int from = AugmentedChain::index(sp, k_to - 1);
          double p = chain.tail(sp, k_to - 1);
          if (p <= 0.0 || cur[from] == NEG_INF) continue;
          double v = cur[from] + std::log(p);
          if (v > best) {
            best = v;
            arg = from;
          }
        }
      }
      if (arg >= 0) {
        nxt[to] = best + em;
        back(t, to) = arg;
      }
    }
    std::swap(cur, nxt);
  }

  int best = -1;
  double best_v = NEG_INF;
  for (int i = 0; i < n; ++i)
    if (cur[i] > best_v) {
      best_v = cur[i];
      best = i;
    }
  if (best < 0) throw numerical_error("viterbi: all paths have zero probability");
  std::vector<int> path(T + 1);
  path[T] = best;
  for (std::size_t t = T; t-- > 0;) path[t] = static_cast<int>(back(t + 1, path[t + 1]));
  return path;
}

}  // namespace ophmm
