#pragma once

#include <span>
#include <vector>

#include "ophmm/model.hpp"
#include "ophmm/rng.hpp"

namespace ophmm {

// Per-bin log emission values for each base state: log p(y_t | s) plus,
// when tracking is present, log p(x_t | s). Row t-1 covers time step t.
Mat emission_log_table(const ModelParams& m, const SpatialGrid& grid,
                       const std::vector<std::vector<int>>& counts,
                       const std::vector<int>& positions);

// Scaled forward pass over the augmented chain. slice(t) is the normalised
// filtering distribution p(s~_t | obs_{1:t}); log_lik(t) is the cumulative
// data log likelihood log p(obs_{1:t}). Index 0 is the initial state.
struct ForwardResult {
  std::vector<Vec> slices;  // T+1 slices of length chain.size()
  Vec log_lik;              // T+1 cumulative, log_lik[0] = 0

  double total_log_lik() const { return log_lik.back(); }
};

// Scaled backward pass: slice(t) proportional to p(obs_{t+1:T} | s~_t) with
// log_scale(t) the log of the proportionality constant.
struct BackwardResult {
  std::vector<Vec> slices;  // T+1
  Vec log_scale;            // T+1, log_scale[T] on the all-ones slice
};

ForwardResult forward_pass(const AugmentedChain& chain, const Mat& log_emit);
BackwardResult backward_pass(const AugmentedChain& chain, const Mat& log_emit);

// Posterior marginals p(s~_t | obs_{1:T}) for t = 0..T (rows), normalised
// within each time step.
Mat smooth(const AugmentedChain& chain, const ForwardResult& fwd, const BackwardResult& bwd);

// Marginal over the base state: p(S_t = s | obs) summed over the K part.
Mat state_marginals(const AugmentedChain& chain, const Mat& smoothed);

// Posterior of K_T (number of distinct states emitted by time T).
Vec k_posterior(const AugmentedChain& chain, const Mat& smoothed);

// Samples s~_{0:T} from the joint posterior by backward recursion through
// the forward slices. Entry t is the augmented state index at time t.
std::vector<int> sample_state_path(const AugmentedChain& chain, const ForwardResult& fwd,
                                   RngStream& rng);

// MAP augmented state path (log-domain Viterbi); ties resolve to the
// lowest augmented index. Throws numerical_error if every path has zero
// probability.
std::vector<int> viterbi_path(const AugmentedChain& chain, const Mat& log_emit);

}  // namespace ophmm
