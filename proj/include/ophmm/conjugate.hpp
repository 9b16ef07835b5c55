#pragma once

#include <vector>

#include "ophmm/hmm.hpp"
#include "ophmm/ingest.hpp"
#include "ophmm/model.hpp"
#include "ophmm/rng.hpp"

namespace ophmm {

// Path statistics feeding the full-conditional updates. A are transition
// counts, B marks first arrivals (B[i][j] = 1 when the first visit to j
// immediately follows i), c are state visit counts, spike_sums per-state
// per-cell spike totals, pos_hist per-state position visit counts.
struct SufficientStats {
  int kappa = 0;
  int n_cells = 0;
  int n_labels = 0;
  Mat A;                                  // kappa x kappa
  Mat B;                                  // kappa x kappa, 0/1
  std::vector<long> c;                    // kappa
  Mat spike_sums;                         // kappa x n_cells
  Mat pos_hist;                           // kappa x n_labels
  std::vector<int> seen_so_far;           // running K_t, for first-arrival detection

  static SufficientStats empty(int kappa, int n_cells, int n_labels);

  // Appends one observation: previous base state, new base state, whether
  // the new state is a first arrival, the bin's counts, and the bin's
  // position label (0 when untracked).
  void update(int s_prev, int s_new, bool first_arrival, std::span<const int> counts, int label);

  // Position-observation count for state i (== c[i] on tracked data).
  long pos_count(int i) const;

  void check_consistency() const;
};

// Builds statistics from an augmented state path (indices into `chain`,
// entry 0 = initial state) and the binned observations. n_labels sizes the
// position histogram (0 = infer from the data's largest label).
SufficientStats stats_from_path(const AugmentedChain& chain, const std::vector<int>& aug_path,
                                const BinnedDataset& data, int n_labels = 0);

// Gamma full conditional for one state's firing rates:
// lambda_{i,n} ~ Gamma(spike_sums[i][n] + alpha, dt * c_i + beta).
Vec sample_lambda_row(const SufficientStats& st, int state, const Hyperparams& hp, double dt,
                      RngStream& rng);

// Embedded-visit mean minimiser: the label x minimising the norm of the
// mean embedded visit vector (1/n_i) sum_u f_x(x_u); ties to lowest label.
// Returns 0 when the state has no position observations.
int embedded_mean_minimiser(const SufficientStats& st, int state, const SpatialGrid& grid);

// Scatter matrix SS_i(xi) = sum_u f_xi(x_u) f_xi(x_u)'.
Sym2 scatter_matrix(const SufficientStats& st, int state, int xi, const SpatialGrid& grid);

// Inverse-Wishart full conditional for one state's covariance, given that
// state's current centre: IW(psi + SS_i(xi), delta + n_i). With no position
// observations this is a prior draw.
Sym2 sample_sigma(const SufficientStats& st, int state, int xi, const Hyperparams& hp,
                  const SpatialGrid& grid, RngStream& rng);

// Categorical full conditional for one state's centre: proportional to
// exp(-0.5 f_{x*}(x)' (Sigma/n_i)^{-1} f_{x*}(x)) over labels, where x* is
// the embedded-mean minimiser. Uniform prior draw when n_i = 0.
int sample_xi(const SufficientStats& st, int state, const Sym2& sigma, const SpatialGrid& grid,
              RngStream& rng);

// Generalised-Dirichlet full conditional for one transition row. With no
// first arrivals in the row's statistics this reduces exactly to
// Dirichlet(A_i + omega) stick-breaking.
Vec sample_transition_row(const SufficientStats& st, int state, const Hyperparams& hp,
                          RngStream& rng);

// Exposed for direct testing: stick-breaking sample of a probability row
// with Beta(zeta_j, eta_j) sticks, eta_j = sum_{l>j} (zeta_l + gamma_l).
Vec generalised_dirichlet_row(std::span<const double> zeta, std::span<const double> gamma,
                              RngStream& rng);

// One draw from the inverse-Wishart distribution IW(psi, dof) on 2x2
// matrices (mean psi / (dof - 3) for dof > 3).
Sym2 sample_inverse_wishart(const Sym2& psi, double dof, RngStream& rng);

// Independent draw of all parameters from the prior at a given model size.
ModelParams sample_prior(const Hyperparams& hp, int kappa, int n_cells, double dt,
                         const SpatialGrid& grid, RngStream& rng);

// One systematic Gibbs sweep through the full conditionals, in the fixed
// order: transition rows; then per state Sigma (given the old centre) and
// the centre (given the new Sigma); then rates.
void gibbs_sweep(ModelParams& params, const SufficientStats& st, const Hyperparams& hp,
                 const SpatialGrid& grid, RngStream& rng);

}  // namespace ophmm
