#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ophmm/grid.hpp"

namespace ophmm {

// Raw experimental inputs: spike times per cell and (optionally) tracked
// positions. Times are seconds from recording start.
struct RawRecording {
  int n_cells = 0;
  std::vector<std::vector<double>> spike_times;  // per cell, ascending
  std::vector<double> position_times;            // ascending
  std::vector<Vec2> positions;                   // same length as position_times
  double duration = 0.0;                         // seconds

  bool has_positions() const { return !position_times.empty(); }
  void validate() const;
};

// Time-binned view of a recording: per-bin spike counts and, when tracking
// is available, one grid label per bin.
struct BinnedDataset {
  double dt = 0.0;
  int n_cells = 0;
  std::vector<std::vector<int>> counts;  // T rows, n_cells columns
  std::vector<int> positions;            // T labels (1-based); empty if untracked
  int snapped_samples = 0;               // tracking samples moved to the nearest accessible cell

  int T() const { return static_cast<int>(counts.size()); }
  bool has_positions() const { return !positions.empty(); }
};

// Bins spikes (and positions when present) on a regular grid of width dt.
// T = floor(duration / dt); spikes at or beyond T*dt are dropped. Each bin's
// label comes from the first tracking sample inside the bin; bins without a
// sample take the label of the most recent earlier sample (leading bins take
// the first sample overall). Samples landing in inaccessible cells are
// snapped to the nearest accessible centroid and counted in `snapped_samples`.
BinnedDataset bin_spikes(const RawRecording& rec, const SpatialGrid& grid, double dt);

// Spike-count-only rebinning at compression rate c: bin width dt/c, exactly
// c * floor(duration/dt) bins, so the covered span [0, T*dt) and therefore
// the total spike count per cell match the base binning for every c.
BinnedDataset rebin(const RawRecording& rec, double base_dt, int c);

}  // namespace ophmm
