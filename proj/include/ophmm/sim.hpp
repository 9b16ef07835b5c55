#pragma once

#include <cstdint>
#include <vector>

#include "ophmm/common.hpp"
#include "ophmm/grid.hpp"
#include "ophmm/ingest.hpp"
#include "ophmm/model.hpp"
#include "ophmm/replay.hpp"
#include "ophmm/rng.hpp"

namespace ophmm {

// Ground-truth draw from the generative model.
struct SimResult {
  std::vector<int> states;  // s_1..s_T (1-based); the chain starts from s_0 = 1
  std::vector<int> labels;  // x_1..x_T (1-based grid labels)
  BinnedDataset data;       // counts + positions at the model's bin width
};

SimResult simulate(const ModelParams& m, const SpatialGrid& grid, int n_bins, std::uint64_t seed);

// Spread binned counts into per-cell spike times, uniform within each bin.
// Produces sorted per-cell time lists suitable for CSV export and re-binning.
std::vector<std::vector<double>> scatter_spike_times(const std::vector<std::vector<int>>& counts,
                                                     double dt, std::uint64_t seed);

struct PlantedEvent {
  int template_id = 0;  // index into the template list used for planting
  int start_bin = 0;    // 1-based bin index on the base timescale
  int length = 0;       // bins covered on the base timescale
};

struct PlantedLedger {
  std::vector<PlantedEvent> events;
  std::vector<int> states;  // simulated chain path before overwriting
  std::vector<int> labels;  // trajectory used for generation (after overwriting)
};

struct ReplaySim {
  BinnedDataset data;  // spikes-only counts (positions empty)
  PlantedLedger ledger;
};

// Simulate a quiescent session with replayed trajectory segments: draw a full
// trajectory, overwrite it with each template at non-overlapping uniform
// starts (collisions resample the later event's start; gives up after 10^4
// retries), smooth the position-only model to get p(S_t = i | x_{1:T}), and
// draw counts from Poisson(dt * mean rate) under those state marginals.
ReplaySim simulate_replay(const ModelParams& m, const SpatialGrid& grid, int n_bins,
                          const std::vector<ReplayTemplate>& templates, int events_per_template,
                          std::uint64_t seed);

// Bin-level binary-classification scores of detections against the ledger at
// compression c (planted events expand to c bins per base bin).
struct ClassificationPoint {
  double omega_star = 0.0;
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  double tpr = 0.0;
  double fpr = 0.0;
  double jaccard = 0.0;  // NaN when TP+FP+FN = 0
  int events_kept = 0;
};

ClassificationPoint classify_replay(const std::vector<ReplayEvent>& events,
                                    const PlantedLedger& ledger,
                                    const std::vector<ReplayTemplate>& templates, int compression,
                                    int n_base_bins, double omega_star);

// Sweep thresholds over a fixed detection run (events detected at the lowest
// threshold, then filtered), yielding a monotone ROC.
std::vector<ClassificationPoint> classify_sweep(const std::vector<ReplayEvent>& events,
                                                const PlantedLedger& ledger,
                                                const std::vector<ReplayTemplate>& templates,
                                                int compression, int n_base_bins,
                                                const std::vector<double>& omega_stars);

// Count of planted events matched by at least one detection of the same
// template whose span overlaps the planted span (base-timescale seconds).
int planted_events_detected(const std::vector<ReplayEvent>& events, const PlantedLedger& ledger,
                            double dt);

}  // namespace ophmm
