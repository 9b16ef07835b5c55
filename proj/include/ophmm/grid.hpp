#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ophmm/common.hpp"

namespace ophmm {

// Discretisation of the arena into square cells. Accessible cells carry
// 1-based labels assigned in row-major order (row 0 col 0 first). Distances
// between cells are geodesic: shortest paths through the 8-neighbour
// adjacency graph of accessible cells, with edge weights equal to the
// Euclidean distance between cell centroids.
class SpatialGrid {
 public:
  struct Cell {
    int row = 0, col = 0;
  };

  SpatialGrid() = default;

  // Builds the grid from raw position samples: the bounding box is split
  // into cells of size `cell_size`; a cell is accessible when at least one
  // sample falls in it or it appears in `forced_accessible` (row, col pairs).
  // Throws data_error when the accessible region is not connected.
  static SpatialGrid build(std::span<const Vec2> samples, double cell_size,
                           std::span<const Cell> forced_accessible = {});

  // Builds directly from an explicit accessible-cell list (origin given).
  static SpatialGrid from_cells(double cell_size, Vec2 origin, int n_rows, int n_cols,
                                std::span<const Cell> accessible);

  int size() const { return static_cast<int>(cells_.size()); }  // M
  int n_rows() const { return n_rows_; }
  int n_cols() const { return n_cols_; }
  double cell_size() const { return cell_size_; }
  Vec2 origin() const { return origin_; }

  const Cell& cell(int label) const { return cells_[check_label(label)]; }
  Vec2 centroid(int label) const;

  // 1-based label of the accessible cell at (row, col); 0 if inaccessible
  // or out of bounds.
  int label_at(int row, int col) const;

  // Geodesic distance between the cells labelled a and b.
  double distance(int a, int b) const {
    return dist_(static_cast<std::size_t>(check_label(a)), static_cast<std::size_t>(check_label(b)));
  }

  // Largest geodesic distance between any two accessible cells.
  double max_distance() const;

  // Embedding f_x(x'): the 2-vector of length distance(x, x') pointing from
  // centroid(x) towards centroid(x'). f_x(x) is the zero vector.
  Vec2 embed(int x, int x_prime) const;

  // Label of the accessible cell whose centroid is nearest (Euclidean) to
  // the point; ties broken toward the lower label.
  int nearest_label(Vec2 p) const;

  // Label for a raw position sample: the containing cell when accessible,
  // otherwise the nearest accessible centroid. `snapped` reports the latter.
  int locate(Vec2 p, bool* snapped = nullptr) const;

  // Stable content checksum used to tie fitted models to their grid.
  std::uint64_t checksum() const;

 private:
  int check_label(int label) const {
    if (label < 1 || label > size()) throw data_error("grid label out of range");
    return label - 1;
  }
  void compute_distances();

  double cell_size_ = 1.0;
  Vec2 origin_{};  // lower-left corner of cell (0, 0)
  int n_rows_ = 0, n_cols_ = 0;
  std::vector<Cell> cells_;          // label-1 -> (row, col)
  std::vector<int> label_by_cell_;   // row * n_cols + col -> label (0 if none)
  Mat dist_;                         // M x M geodesic distances
};

}  // namespace ophmm
