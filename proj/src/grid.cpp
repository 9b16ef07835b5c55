#include "ophmm/grid.hpp"

#include <cmath>
#include <cstring>
#include <queue>
#include <set>

namespace ophmm {

SpatialGrid SpatialGrid::build(std::span<const Vec2> samples, double cell_size,
                               std::span<const Cell> forced_accessible) {
  if (cell_size <= 0.0) throw config_error("grid cell size must be positive");
  if (samples.empty() && forced_accessible.empty())
    throw data_error("cannot build grid without position samples or an accessibility mask");

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const Vec2& p : samples) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  if (samples.empty()) {
    xmin = ymin = 0.0;
    xmax = ymax = 0.0;
  }

  Vec2 origin{xmin, ymin};
  auto col_of = [&](double x) {
    int c = static_cast<int>(std::floor((x - origin.x) / cell_size));
    return c;
  };
  int n_cols = std::max(1, col_of(xmax) + 1);
  int n_rows = std::max(1, static_cast<int>(std::floor((ymax - origin.y) / cell_size)) + 1);

  std::set<std::pair<int, int>> occupied;
  for (const Vec2& p : samples) {
    int c = std::min(n_cols - 1, std::max(0, col_of(p.x)));
    int r = std::min(n_rows - 1, std::max(0, static_cast<int>(std::floor((p.y - origin.y) / cell_size))));
    occupied.insert({r, c});
  }
  for (const Cell& cell : forced_accessible) {
    if (cell.row < 0 || cell.col < 0) throw data_error("mask cell with negative coordinates");
    n_rows = std::max(n_rows, cell.row + 1);
    n_cols = std::max(n_cols, cell.col + 1);
    occupied.insert({cell.row, cell.col});
  }

  std::vector<Cell> accessible;
  accessible.reserve(occupied.size());
  for (const auto& [r, c] : occupied) accessible.push_back({r, c});
  return from_cells(cell_size, origin, n_rows, n_cols, accessible);
}

SpatialGrid SpatialGrid::from_cells(double cell_size, Vec2 origin, int n_rows, int n_cols,
                                    std::span<const Cell> accessible) {
  if (cell_size <= 0.0) throw config_error("grid cell size must be positive");
  if (n_rows <= 0 || n_cols <= 0) throw data_error("grid dimensions must be positive");
  if (accessible.empty()) throw data_error("grid has no accessible cells");

  SpatialGrid g;
  g.cell_size_ = cell_size;
  g.origin_ = origin;
  g.n_rows_ = n_rows;
  g.n_cols_ = n_cols;
  g.label_by_cell_.assign(static_cast<std::size_t>(n_rows) * n_cols, 0);

  // Deduplicate and sort row-major so labels are deterministic.
  std::set<std::pair<int, int>> cells;
  for (const Cell& c : accessible) {
    if (c.row < 0 || c.row >= n_rows || c.col < 0 || c.col >= n_cols)
      throw data_error("accessible cell outside grid bounds");
    cells.insert({c.row, c.col});
  }
  for (const auto& [r, c] : cells) {
    g.cells_.push_back({r, c});
    g.label_by_cell_[static_cast<std::size_t>(r) * n_cols + c] = static_cast<int>(g.cells_.size());
  }
  g.compute_distances();
  return g;
}

Vec2 SpatialGrid::centroid(int label) const {
  const Cell& c = cell(label);
  return {origin_.x + (c.col + 0.5) * cell_size_, origin_.y + (c.row + 0.5) * cell_size_};
}

int SpatialGrid::label_at(int row, int col) const {
  if (row < 0 || row >= n_rows_ || col < 0 || col >= n_cols_) return 0;
  return label_by_cell_[static_cast<std::size_t>(row) * n_cols_ + col];
}

void SpatialGrid::compute_distances() {
  const int m = size();
  dist_ = Mat(m, m, std::numeric_limits<double>::infinity());

  // Per-source Dijkstra over the 8-neighbour adjacency graph. Edge weights
  // are centroid separations: cell_size straight, cell_size * sqrt(2)
  // diagonal.
  const double straight = cell_size_;
  const double diagonal = cell_size_ * std::sqrt(2.0);
  for (int src = 0; src < m; ++src) {
    double* d = dist_.row(src);
    d[src] = 0.0;
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    heap.push({0.0, src});
    while (!heap.empty()) {
      auto [cost, u] = heap.top();
      heap.pop();
      if (cost > d[u]) continue;
      const Cell& cu = cells_[u];
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          int lbl = label_at(cu.row + dr, cu.col + dc);
          if (lbl == 0) continue;
          int v = lbl - 1;
          double w = (dr != 0 && dc != 0) ? diagonal : straight;
          if (cost + w < d[v]) {
            d[v] = cost + w;
            heap.push({d[v], v});
          }
        }
      }
    }
  }

  // A finite distance table is equivalent to connectivity.
  int unreachable = 0;
  for (int j = 0; j < m; ++j)
    if (!std::isfinite(dist_(0, j))) ++unreachable;
  if (unreachable > 0)
    throw data_error("grid accessible region is disconnected (" + std::to_string(unreachable) +
                     " of " + std::to_string(m) + " cells unreachable from label 1)");
}

double SpatialGrid::max_distance() const {
  double d = 0.0;
  for (std::size_t i = 0; i < dist_.rows(); ++i)
    for (std::size_t j = 0; j < dist_.cols(); ++j) d = std::max(d, dist_(i, j));
  return d;
}

Vec2 SpatialGrid::embed(int x, int x_prime) const {
  if (x == x_prime) return {0.0, 0.0};
  Vec2 delta = centroid(x_prime) - centroid(x);
  double euclid = norm(delta);
  if (euclid == 0.0) return {0.0, 0.0};
  double len = distance(x, x_prime);
  return (len / euclid) * delta;
}

int SpatialGrid::nearest_label(Vec2 p) const {
  int best = 1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int lbl = 1; lbl <= size(); ++lbl) {
    double d = norm(p - centroid(lbl));
    if (d < best_d - 1e-12) {
      best_d = d;
      best = lbl;
    }
  }
  return best;
}

int SpatialGrid::locate(Vec2 p, bool* snapped) const {
  int row = static_cast<int>(std::floor((p.y - origin_.y) / cell_size_));
  int col = static_cast<int>(std::floor((p.x - origin_.x) / cell_size_));
  int lbl = label_at(row, col);
  if (snapped) *snapped = (lbl == 0);
  if (lbl != 0) return lbl;
  return nearest_label(p);
}

std::uint64_t SpatialGrid::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  auto feed_double = [&](double d) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof d);
    std::memcpy(&bits, &d, sizeof bits);
    feed(bits);
  };
  feed_double(cell_size_);
  feed_double(origin_.x);
  feed_double(origin_.y);
  feed(static_cast<std::uint64_t>(n_rows_));
  feed(static_cast<std::uint64_t>(n_cols_));
  for (const Cell& c : cells_) {
    feed(static_cast<std::uint64_t>(c.row));
    feed(static_cast<std::uint64_t>(c.col));
  }
  return h;
}

}  // namespace ophmm
