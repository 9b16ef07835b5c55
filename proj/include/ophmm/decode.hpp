#pragma once

#include <optional>
#include <vector>

#include "ophmm/hmm.hpp"
#include "ophmm/ingest.hpp"
#include "ophmm/model.hpp"

namespace ophmm {

// Posterior position distribution from spikes alone under the fitted model:
// row t is p(X_t = x | y_{1:T}) = sum_i p(S_t = i | y) p(x | i).
Mat op_position_posterior(const ModelParams& m, const SpatialGrid& grid,
                          const std::vector<std::vector<int>>& counts);

// Trajectory decoder: joint maximisation over position paths with the
// hidden state summed out inside the per-position maximisation, followed by
// the matching backward trace. Ties resolve to the lower label.
std::vector<int> op_viterbi_positions(const ModelParams& m, const SpatialGrid& grid,
                                      const std::vector<std::vector<int>>& counts);

// Memoryless Bayesian decoder: per-position Poisson rate maps estimated by
// maximum likelihood with add-one-half smoothing, combined per bin with the
// smoothed occupancy prior.
struct BdModel {
  Mat rates;      // M x C (Hz)
  Vec log_prior;  // M
  double dt = 0.0;
};

BdModel fit_bd(const BinnedDataset& train, const SpatialGrid& grid);

// Per-bin posterior (T x M) and its per-bin MAP labels.
Mat bd_position_posterior(const BdModel& bd, const std::vector<std::vector<int>>& counts,
                          double dt);
std::vector<int> bd_map_positions(const BdModel& bd, const std::vector<std::vector<int>>& counts,
                                  double dt);

// Position-state HMM baseline: one hidden state per grid cell, Gaussian
// transition kernel in geodesic distance, Poisson emissions from the same
// smoothed rate maps; decoded with standard Viterbi from a uniform start.
struct LpModel {
  Mat rates;      // M x C
  Mat log_trans;  // M x M
  double dt = 0.0;
};

// bandwidth is the kernel scale in distance units (default two grid cells).
LpModel fit_lp(const BinnedDataset& train, const SpatialGrid& grid, double bandwidth = 0.0);

std::vector<int> lp_viterbi_positions(const LpModel& lp,
                                      const std::vector<std::vector<int>>& counts, double dt);

struct DecodeMetrics {
  double median_geodesic_error = 0.0;
  double mean_posterior_at_truth = 0.0;  // NaN when no posterior was supplied
};

DecodeMetrics decoding_metrics(const std::vector<int>& decoded, const std::vector<int>& truth,
                               const SpatialGrid& grid, const Mat* posterior = nullptr);

}  // namespace ophmm
