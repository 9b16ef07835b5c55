#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <vector>

#include "doctest.h"
#include "ophmm/common.hpp"
#include "ophmm/grid.hpp"
#include "ophmm/ingest.hpp"

using namespace ophmm;

namespace {

SpatialGrid corridor(int n) {
  std::vector<SpatialGrid::Cell> cells;
  for (int c = 0; c < n; ++c) cells.push_back({0, c});
  return SpatialGrid::from_cells(1.0, Vec2{0.0, 0.0}, 1, n, cells);
}

}  // namespace

TEST_CASE("spike binning uses half-open bins and drops spikes past the last bin") {
  RawRecording rec;
  rec.n_cells = 2;
  rec.spike_times = {{0.0, 0.49, 0.5, 1.99}, {1.0}};
  rec.duration = 2.0;
  SpatialGrid g = corridor(3);
  BinnedDataset d = bin_spikes(rec, g, 0.5);
  REQUIRE(d.T() == 4);
  CHECK(d.counts[0] == std::vector<int>{2, 0});
  CHECK(d.counts[1] == std::vector<int>{1, 0});
  CHECK(d.counts[2] == std::vector<int>{0, 1});
  CHECK(d.counts[3] == std::vector<int>{1, 0});
  CHECK_FALSE(d.has_positions());

  // A spike exactly at duration falls outside the covered span.
  rec.spike_times[0].push_back(2.0);
  BinnedDataset d2 = bin_spikes(rec, g, 0.5);
  CHECK(d2.counts[3] == std::vector<int>{1, 0});
}

TEST_CASE("bin count is the floor of duration over dt") {
  RawRecording rec;
  rec.n_cells = 1;
  rec.spike_times = {{}};
  rec.duration = 1.24;
  BinnedDataset d = bin_spikes(rec, corridor(2), 0.25);
  CHECK(d.T() == 4);
}

TEST_CASE("bin labels come from the first sample in the bin and carry forward") {
  RawRecording rec;
  rec.n_cells = 1;
  rec.spike_times = {{}};
  rec.position_times = {0.6, 0.7, 1.6};
  rec.positions = {{2.5, 0.5}, {0.5, 0.5}, {4.5, 0.5}};
  rec.duration = 2.5;
  SpatialGrid g = corridor(5);
  BinnedDataset d = bin_spikes(rec, g, 0.5);
  REQUIRE(d.T() == 5);
  // Bin 2 contains samples at 0.6 (label 3) and 0.7 (label 1): first wins.
  CHECK(d.positions[1] == 3);
  // Leading bin 1 has no sample and takes the first sample overall.
  CHECK(d.positions[0] == 3);
  // Bin 3 has no sample; the most recent sample (0.7, label 1) carries
  // forward — fresher than bin 2's assigned label.
  CHECK(d.positions[2] == 1);
  // Bin 4 contains the sample at 1.6 (label 5); bin 5 inherits it.
  CHECK(d.positions[3] == 5);
  CHECK(d.positions[4] == 5);
  CHECK(d.snapped_samples == 0);
}

TEST_CASE("samples in inaccessible cells snap to the nearest accessible centroid") {
  std::vector<SpatialGrid::Cell> cells = {{0, 0}, {0, 1}, {0, 2}};
  SpatialGrid g = SpatialGrid::from_cells(1.0, Vec2{0.0, 0.0}, 2, 3, cells);
  RawRecording rec;
  rec.n_cells = 1;
  rec.spike_times = {{}};
  rec.position_times = {0.1};
  rec.positions = {{2.4, 1.9}};  // row 1 is inaccessible; nearest centroid is label 3
  rec.duration = 1.0;
  BinnedDataset d = bin_spikes(rec, g, 1.0);
  CHECK(d.positions[0] == 3);
  CHECK(d.snapped_samples == 1);
}

TEST_CASE("rebinning preserves spike totals and covers the same span at every rate") {
  RawRecording rec;
  rec.n_cells = 2;
  rec.spike_times = {{0.01, 0.11, 0.99, 1.57}, {0.4, 0.41, 0.42}};
  rec.duration = 2.0;
  for (int c : {1, 2, 3, 5}) {
    BinnedDataset d = rebin(rec, 0.5, c);
    CHECK(d.T() == 4 * c);
    CHECK(d.dt == doctest::Approx(0.5 / c));
    int total0 = 0, total1 = 0;
    for (const auto& row : d.counts) {
      total0 += row[0];
      total1 += row[1];
    }
    CHECK(total0 == 4);
    CHECK(total1 == 3);
    CHECK_FALSE(d.has_positions());
  }
}

TEST_CASE("rebinning at rate 1 matches plain binning of the counts") {
  RawRecording rec;
  rec.n_cells = 1;
  rec.spike_times = {{0.05, 0.74, 0.76, 1.2}};
  rec.duration = 1.5;
  BinnedDataset base = bin_spikes(rec, corridor(2), 0.5);
  BinnedDataset r = rebin(rec, 0.5, 1);
  REQUIRE(base.T() == r.T());
  for (int t = 0; t < base.T(); ++t) CHECK(base.counts[t] == r.counts[t]);
}

TEST_CASE("validation rejects malformed recordings") {
  RawRecording rec;
  rec.n_cells = 0;
  rec.duration = 1.0;
  CHECK_THROWS_AS(rec.validate(), data_error);

  rec.n_cells = 1;
  rec.spike_times = {{0.2, 0.1}};  // out of order
  CHECK_THROWS_AS(rec.validate(), data_error);

  rec.spike_times = {{0.1, 0.2}};
  rec.duration = -1.0;
  CHECK_THROWS_AS(rec.validate(), data_error);

  rec.duration = 1.0;
  rec.position_times = {0.1, 0.2};
  rec.positions = {{0.0, 0.0}};  // length mismatch
  CHECK_THROWS_AS(rec.validate(), data_error);

  rec.positions = {{0.0, 0.0}, {1.0, 1.0}};
  CHECK_NOTHROW(rec.validate());
}

TEST_CASE("binning rejects non-positive dt") {
  RawRecording rec;
  rec.n_cells = 1;
  rec.spike_times = {{}};
  rec.duration = 1.0;
  CHECK_THROWS_AS(bin_spikes(rec, corridor(2), 0.0), config_error);
  CHECK_THROWS_AS(rebin(rec, 0.5, 0), config_error);
}
