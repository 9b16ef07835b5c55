// Generates the two benchmark protocols shipped under data/: a linear track
// (4 cells, 4 states) and a T-maze (10 cells, 5 states). Each protocol gets a
// grid, a ground-truth generating model, and a pair of traversal templates.
// The artifacts are deterministic, so regenerating them is byte-stable.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ophmm/grid.hpp"
#include "ophmm/io.hpp"
#include "ophmm/model.hpp"
#include "ophmm/replay.hpp"

using namespace ophmm;

namespace {

ModelParams linear_track_model(const SpatialGrid& grid) {
  ModelParams m;
  m.kappa = 4;
  m.n_cells = 4;
  m.dt = 0.1;

  // Sticky left-to-right random walk over four track segments.
  const double P[4][4] = {{0.90, 0.10, 0.00, 0.00},
                          {0.075, 0.85, 0.075, 0.00},
                          {0.00, 0.075, 0.85, 0.075},
                          {0.00, 0.00, 0.10, 0.90}};
  m.P = Mat(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m.P(i, j) = P[i][j];

  // One cell tuned per state, quiet elsewhere.
  const double preferred[4] = {5.5, 4.5, 5.0, 6.0};
  m.lambda = Mat(4, 4, 0.2);
  for (int i = 0; i < 4; ++i) m.lambda(i, i) = preferred[i];

  // Segment centres at labels 3, 8, 13, 18 with ~1.5-cell position spread.
  m.xi = {grid.label_at(0, 2), grid.label_at(0, 7), grid.label_at(0, 12), grid.label_at(0, 17)};
  m.sigma.assign(4, Sym2{225.0, 0.0, 225.0});
  m.validate(grid);
  return m;
}

std::vector<ReplayTemplate> linear_track_templates(const SpatialGrid& grid) {
  ReplayTemplate fwd, bwd;
  fwd.id = 1;
  bwd.id = 2;
  for (int c = 0; c < grid.n_cols(); ++c) {
    int label = grid.label_at(0, c);
    fwd.labels.push_back(label);
    fwd.labels.push_back(label);
  }
  bwd.labels.assign(fwd.labels.rbegin(), fwd.labels.rend());
  return {fwd, bwd};
}

SpatialGrid t_maze_grid() {
  std::vector<SpatialGrid::Cell> cells;
  for (int c = 0; c < 7; ++c) cells.push_back({0, c});  // top bar
  for (int r = 1; r <= 5; ++r) cells.push_back({r, 3});  // stem
  return SpatialGrid::from_cells(10.0, Vec2{0.0, 0.0}, 6, 7, cells);
}

ModelParams t_maze_model(const SpatialGrid& grid) {
  ModelParams m;
  m.kappa = 5;
  m.n_cells = 10;
  m.dt = 0.1;

  // States: 1 stem base, 2 stem middle, 3 junction, 4 left arm, 5 right arm.
  const double P[5][5] = {{0.85, 0.15, 0.00, 0.00, 0.00},
                          {0.075, 0.85, 0.075, 0.00, 0.00},
                          {0.00, 0.10, 0.775, 0.0625, 0.0625},
                          {0.00, 0.00, 0.10, 0.90, 0.00},
                          {0.00, 0.00, 0.10, 0.00, 0.90}};
  m.P = Mat(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) m.P(i, j) = P[i][j];

  // Two cells tuned per state.
  const double preferred[5][2] = {{5.0, 4.0}, {4.5, 5.5}, {6.0, 4.0}, {5.0, 4.5}, {5.5, 4.8}};
  m.lambda = Mat(5, 10, 0.2);
  for (int i = 0; i < 5; ++i) {
    m.lambda(i, 2 * i) = preferred[i][0];
    m.lambda(i, 2 * i + 1) = preferred[i][1];
  }

  m.xi = {grid.label_at(5, 3),   // base: stem bottom
          grid.label_at(2, 3),   // stem middle
          grid.label_at(0, 3),   // junction
          grid.label_at(0, 1),   // left arm
          grid.label_at(0, 5)};  // right arm
  m.sigma = {Sym2{144.0, 0.0, 144.0}, Sym2{196.0, 0.0, 196.0}, Sym2{100.0, 0.0, 100.0},
             Sym2{169.0, 0.0, 169.0}, Sym2{169.0, 0.0, 169.0}};
  m.validate(grid);
  return m;
}

std::vector<ReplayTemplate> t_maze_templates(const SpatialGrid& grid) {
  // Geodesic runs from the stem base to each arm tip, five bins per cell.
  std::vector<int> stem = {grid.label_at(5, 3), grid.label_at(4, 3), grid.label_at(3, 3),
                           grid.label_at(2, 3), grid.label_at(1, 3), grid.label_at(0, 3)};
  std::vector<int> left = {grid.label_at(0, 2), grid.label_at(0, 1), grid.label_at(0, 0)};
  std::vector<int> right = {grid.label_at(0, 4), grid.label_at(0, 5), grid.label_at(0, 6)};

  auto expand = [](int id, const std::vector<int>& path) {
    ReplayTemplate t;
    t.id = id;
    for (int label : path)
      for (int rep = 0; rep < 5; ++rep) t.labels.push_back(label);
    return t;
  };
  std::vector<int> to_left = stem, to_right = stem;
  to_left.insert(to_left.end(), left.begin(), left.end());
  to_right.insert(to_right.end(), right.begin(), right.end());
  return {expand(1, to_left), expand(2, to_right)};
}

void write_protocol(const std::string& dir, const SpatialGrid& grid, const ModelParams& model,
                    const std::vector<ReplayTemplate>& templates) {
  std::filesystem::create_directories(dir);
  save_json(dir + "/grid.json", grid_to_json(grid));
  save_json(dir + "/model.json", model_to_json(model, grid.checksum()));
  save_json(dir + "/templates.json", templates_to_json(templates));
  std::cout << dir << ": M=" << grid.size() << " kappa=" << model.kappa
            << " cells=" << model.n_cells << " templates=" << templates.size() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Write the benchmark protocol assets (grids, models, templates)"};
  std::string out = "data";
  app.add_option("--out", out, "output directory (default data)");
  CLI11_PARSE(app, argc, argv);

  try {
    {
      std::vector<SpatialGrid::Cell> cells;
      for (int c = 0; c < 20; ++c) cells.push_back({0, c});
      SpatialGrid grid = SpatialGrid::from_cells(10.0, Vec2{0.0, 0.0}, 1, 20, cells);
      write_protocol(out + "/linear-track", grid, linear_track_model(grid),
                     linear_track_templates(grid));
    }
    {
      SpatialGrid grid = t_maze_grid();
      write_protocol(out + "/t-maze", grid, t_maze_model(grid), t_maze_templates(grid));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
