#pragma once

#include <cstdint>
#include <vector>

#include "ophmm/conjugate.hpp"
#include "ophmm/hmm.hpp"
#include "ophmm/ingest.hpp"
#include "ophmm/model.hpp"

namespace ophmm {

struct SmcConfig {
  int n_particles = 1500;
  double ess_threshold_frac = 0.5;   // resample when ESS < frac * H
  double subpop_floor_frac = 0.1;    // H* = frac * H protected per model size
  std::uint64_t seed = 0;
  int threads = 1;
  bool record_diagnostics = true;

  void validate() const;
};

struct DiagnosticsRow {
  int t = 0;
  double ess = 0.0;
  bool resampled = false;
  Vec p_kappa;  // posterior share of each model size 1..kappa_bar at time t
};

struct FitResult {
  ModelParams params;        // point estimate truncated to kappa_hat states
  ModelParams params_full;   // kappa_bar-state estimate used for the K_T scan
  int kappa_hat = 0;
  Vec k_posterior;           // posterior of K_T under params_full
  std::vector<DiagnosticsRow> diagnostics;
  int n_resamples = 0;
};

// Weighted-sample summaries. Weights are normalised to mean one; ESS is
// H / (1 + population variance of the normalised weights).
double effective_sample_size(std::span<const double> weights_mean_one);

// Sequential Monte Carlo over observation times with resample-move
// rejuvenation: particles carry full model parameters (including their own
// model size), weights grow by incremental data likelihoods, and when the
// effective sample size drops below the threshold the population is
// resampled with per-model-size protection and every particle is moved by
// one Gibbs sweep over a freshly sampled state path.
FitResult fit_smc(const BinnedDataset& data, const SpatialGrid& grid, const Hyperparams& hp,
                  const SmcConfig& cfg);

// Weighted point estimate over a heterogeneous-size population: state i
// pools the particles whose model contains state i. Exposed for testing.
struct ParticleSummary {
  ModelParams theta;
  double weight = 0.0;  // normalised to mean one
};
ModelParams estimate_params_full(const std::vector<ParticleSummary>& particles,
                                 const Hyperparams& hp, const SpatialGrid& grid, int kappa_bar,
                                 int n_cells, double dt);

// Model-size estimate: the posterior mode of K_T under the full-size point
// estimate (ties to the smaller size). Returns the K_T posterior too.
int estimate_kappa(const ModelParams& params_full, const BinnedDataset& data,
                   const SpatialGrid& grid, Vec* k_post = nullptr);

// Restriction of a full-size estimate to its first kappa_hat states with
// renormalised transition rows.
ModelParams truncate_model(const ModelParams& full, int kappa_hat);

// Symmetric positive-definite projection: eigenvalues clamped from below at
// floor_frac * trace.
Sym2 spd_project(const Sym2& s, double floor_frac = 1e-8);

}  // namespace ophmm
