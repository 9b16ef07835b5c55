#include "ophmm/ingest.hpp"

#include <algorithm>
#include <cmath>

namespace ophmm {

void RawRecording::validate() const {
  if (n_cells <= 0) throw data_error("recording has no cells");
  if (static_cast<int>(spike_times.size()) != n_cells)
    throw data_error("spike_times size does not match n_cells");
  if (duration <= 0.0) throw data_error("recording duration must be positive");
  for (int n = 0; n < n_cells; ++n) {
    const auto& st = spike_times[n];
    if (!std::is_sorted(st.begin(), st.end()))
      throw data_error("spike times for cell " + std::to_string(n) + " are not sorted");
    if (!st.empty() && (st.front() < 0.0 || st.back() > duration))
      throw data_error("spike time outside [0, duration] for cell " + std::to_string(n));
  }
  if (position_times.size() != positions.size())
    throw data_error("position times/coordinates length mismatch");
  if (!std::is_sorted(position_times.begin(), position_times.end()))
    throw data_error("position samples are not sorted in time");
}

BinnedDataset bin_spikes(const RawRecording& rec, const SpatialGrid& grid, double dt) {
  rec.validate();
  if (dt <= 0.0) throw config_error("bin width must be positive");
  const long T = static_cast<long>(std::floor(rec.duration / dt + 1e-9));
  if (T < 1) throw data_error("recording shorter than one bin");

  BinnedDataset out;
  out.dt = dt;
  out.n_cells = rec.n_cells;
  out.counts.assign(T, std::vector<int>(rec.n_cells, 0));
  for (int n = 0; n < rec.n_cells; ++n) {
    for (double s : rec.spike_times[n]) {
      long t = static_cast<long>(std::floor(s / dt));
      if (t >= 0 && t < T) ++out.counts[t][n];
    }
  }

  if (rec.has_positions()) {
    // Pre-resolve every tracking sample to a grid label.
    std::vector<int> sample_labels(rec.positions.size());
    for (std::size_t i = 0; i < rec.positions.size(); ++i) {
      bool snapped = false;
      sample_labels[i] = grid.locate(rec.positions[i], &snapped);
      if (snapped) ++out.snapped_samples;
    }
    out.positions.assign(T, 0);
    std::size_t i = 0;
    int carried = sample_labels.front();
    for (long t = 0; t < T; ++t) {
      double lo = t * dt, hi = (t + 1) * dt;
      while (i < rec.position_times.size() && rec.position_times[i] < lo) {
        carried = sample_labels[i];
        ++i;
      }
      if (i < rec.position_times.size() && rec.position_times[i] < hi) {
        out.positions[t] = sample_labels[i];
        carried = sample_labels[i];
      } else {
        out.positions[t] = carried;
      }
    }
  }
  return out;
}

BinnedDataset rebin(const RawRecording& rec, double base_dt, int c) {
  rec.validate();
  if (base_dt <= 0.0) throw config_error("bin width must be positive");
  if (c < 1) throw config_error("compression rate must be >= 1");
  const long T = static_cast<long>(std::floor(rec.duration / base_dt + 1e-9));
  if (T < 1) throw data_error("recording shorter than one bin");
  const double dt = base_dt / c;
  const long Tc = T * c;

  BinnedDataset out;
  out.dt = dt;
  out.n_cells = rec.n_cells;
  out.counts.assign(Tc, std::vector<int>(rec.n_cells, 0));
  for (int n = 0; n < rec.n_cells; ++n) {
    for (double s : rec.spike_times[n]) {
      long t = static_cast<long>(std::floor(s / dt));
      if (t >= 0 && t < Tc) ++out.counts[t][n];
    }
  }
  return out;
}

}  // namespace ophmm
