#pragma once

#include <span>
#include <vector>

#include "ophmm/grid.hpp"

namespace ophmm {

// Prior hyperparameters shared by fitting and simulation-from-prior.
struct Hyperparams {
  double alpha = 0.5;   // Gamma shape for firing rates
  double beta = 0.01;   // Gamma rate for firing rates (prior mean 50 Hz)
  double omega = 1.0;   // Dirichlet concentration for transition rows
  Sym2 psi{1.0, 0.0, 1.0};  // inverse-Wishart scale
  double delta = 4.0;   // inverse-Wishart degrees of freedom
  int kappa_bar = 10;   // cap on the number of hidden states

  void validate() const;
};

// psi defaults to diag((max geodesic span / 8)^2) for the given grid.
Hyperparams default_hyperparams(const SpatialGrid& grid);

// Point parameters of a kappa-state model over a fixed grid.
struct ModelParams {
  int kappa = 0;
  int n_cells = 0;
  double dt = 0.0;
  Mat P;                      // kappa x kappa row-stochastic transition matrix
  Mat lambda;                 // kappa x n_cells firing rates (Hz)
  std::vector<int> xi;        // kappa place-field centres (grid labels)
  std::vector<Sym2> sigma;    // kappa place-field covariances

  void validate(const SpatialGrid& grid) const;
};

// log p(y | state i): independent Poisson counts with exposure dt.
double spike_log_lik(const ModelParams& m, int state, std::span<const int> counts);

// Normalised position distribution for one state: p(x | i) over labels
// 1..M, proportional to exp(-0.5 f_xi(x)' Sigma^{-1} f_xi(x)). Returned in
// the probability domain; normalisation is done after subtracting the max
// exponent.
Vec position_probs(const SpatialGrid& grid, int xi, const Sym2& sigma);

// kappa x M table of log p(x | i), cached by callers that evaluate many bins.
Mat position_log_prob_table(const ModelParams& m, const SpatialGrid& grid);

// State-marginal stationary distribution of P, solved from nu' P = nu' with
// sum(nu) = 1. When the linear system is singular or produces an invalid
// vector (reducible or periodic chains), falls back to the Cesaro average
// of the first 10^4 powers applied to the uniform distribution and sets
// *used_fallback.
Vec stationary_distribution(const Mat& P, bool* used_fallback = nullptr);

// Re-expresses the model at a coarser bin width: new_dt must be an integer
// multiple k of m.dt; the transition matrix becomes P^k and dt is updated
// (rates are per second, so emissions rescale through the exposure term).
ModelParams adapt_model_dt(const ModelParams& m, double new_dt);

// Permute model states into order of first appearance along a state path so
// that two models fitted/generated with different internal labellings can be
// compared row by row.  States never visited keep their relative order at the
// end.  Returns the relabelled model and the old-to-new label map.
struct RelabelResult {
  ModelParams params;
  std::vector<int> old_to_new;  // old_to_new[i-1] = new 1-based label of old state i
};

RelabelResult relabel_by_appearance(const ModelParams& m, const std::vector<int>& state_path);

// The relabelled chain (S_t, K_t) with K_t = number of distinct states
// emitted so far. States are the kappa*(kappa+1)/2 feasible pairs s <= k,
// indexed contiguously by k-block: index(s, k) = k(k-1)/2 + s - 1.
class AugmentedChain {
 public:
  explicit AugmentedChain(const Mat& P);

  int kappa() const { return kappa_; }
  int size() const { return n_; }  // kappa (kappa + 1) / 2

  static int index(int s, int k) { return k * (k - 1) / 2 + s - 1; }
  int state_of(int idx) const { return s_of_[idx]; }
  int seen_of(int idx) const { return k_of_[idx]; }

  // Base transition probability and the new-state tail sum_{s > k} P[s'][s].
  double base(int s_from, int s_to) const { return P_(s_from - 1, s_to - 1); }
  double tail(int s_from, int k_seen) const { return tail_(s_from - 1, k_seen - 1); }

  // Transition probability between augmented states (by index).
  double prob(int idx_from, int idx_to) const;

  // One forward step in the scaled linear domain: given the normalised
  // previous slice and per-base-state log emissions at the new time, fills
  // `next` (normalised to sum 1) and returns the log of the incremental
  // data likelihood p(y_t | y_{1:t-1}). Returns -inf and leaves `next`
  // undefined when every path has zero probability.
  double forward_step(std::span<const double> prev, std::span<const double> log_emit,
                      std::span<double> next) const;

  // One backward step: given normalised beta-slice at t+1 and log emissions
  // at t+1, fills the slice at t (normalised) and returns the log scale.
  double backward_step(std::span<const double> next, std::span<const double> log_emit,
                       std::span<double> prev) const;

  // Initial slice: unit mass on (s, k) = (1, 1).
  Vec initial_slice() const;

 private:
  int kappa_, n_;
  Mat P_;
  Mat tail_;  // tail_(s'-1, k-1) = sum_{s > k} P[s'][s]
  std::vector<int> s_of_, k_of_;
};

}  // namespace ophmm
