#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ophmm/decode.hpp"
#include "ophmm/grid.hpp"
#include "ophmm/hmm.hpp"
#include "ophmm/model.hpp"
#include "oracle_helpers.hpp"

using namespace ophmm;

namespace {

SpatialGrid corridor(int n, double cell = 1.0) {
  std::vector<SpatialGrid::Cell> cells;
  for (int c = 0; c < n; ++c) cells.push_back({0, c});
  return SpatialGrid::from_cells(cell, Vec2{0.0, 0.0}, 1, n, cells);
}

ModelParams two_state_model() {
  ModelParams m;
  m.kappa = 2;
  m.n_cells = 2;
  m.dt = 0.25;
  m.P = Mat(2, 2);
  m.P(0, 0) = 0.8;
  m.P(0, 1) = 0.2;
  m.P(1, 0) = 0.35;
  m.P(1, 1) = 0.65;
  m.lambda = Mat(2, 2);
  m.lambda(0, 0) = 6.0;
  m.lambda(0, 1) = 0.5;
  m.lambda(1, 0) = 0.8;
  m.lambda(1, 1) = 7.0;
  m.xi = {1, 4};
  m.sigma = {Sym2{0.8, 0.1, 1.2}, Sym2{2.0, -0.3, 1.5}};
  return m;
}

ModelParams three_state_model() {
  ModelParams m;
  m.kappa = 3;
  m.n_cells = 2;
  m.dt = 0.2;
  m.P = Mat(3, 3);
  double p[3][3] = {{0.7, 0.2, 0.1}, {0.3, 0.5, 0.2}, {0.25, 0.3, 0.45}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m.P(i, j) = p[i][j];
  m.lambda = Mat(3, 2);
  double lam[3][2] = {{5.0, 0.3}, {0.5, 6.0}, {2.0, 2.0}};
  for (int i = 0; i < 3; ++i)
    for (int n = 0; n < 2; ++n) m.lambda(i, n) = lam[i][n];
  m.xi = {1, 3, 5};
  m.sigma = {Sym2{0.9, 0.0, 1.0}, Sym2{1.5, 0.2, 1.1}, Sym2{0.7, -0.1, 0.8}};
  return m;
}

// Joint log p(x_{1:T}, y_{1:T}) by explicit state-path summation.
double brute_joint(const ModelParams& m, const SpatialGrid& grid,
                   const std::vector<std::vector<int>>& counts, const std::vector<int>& labels) {
  auto paths = oracle::enumerate_paths(m.kappa, static_cast<int>(counts.size()));
  std::vector<double> terms;
  double mx = NEG_INF;
  for (const auto& path : paths) {
    double v = oracle::path_log_prob(m, path) +
               oracle::path_obs_log_lik(m, grid, path, counts, labels);
    terms.push_back(v);
    mx = std::max(mx, v);
  }
  double z = 0.0;
  for (double v : terms) z += std::exp(v - mx);
  return mx + std::log(z);
}

// Exhaustive argmax over all position sequences of the joint above, with
// ties going to the lexicographically smallest sequence.
std::vector<int> brute_best_labels(const ModelParams& m, const SpatialGrid& grid,
                                   const std::vector<std::vector<int>>& counts) {
  int T = static_cast<int>(counts.size());
  int M = grid.size();
  std::vector<int> seq(T, 1), best_seq;
  double best = NEG_INF;
  while (true) {
    double v = brute_joint(m, grid, counts, seq);
    if (v > best + 1e-12) {
      best = v;
      best_seq = seq;
    }
    int pos = T - 1;
    while (pos >= 0 && seq[pos] == M) seq[pos--] = 1;
    if (pos < 0) break;
    ++seq[pos];
  }
  return best_seq;
}

}  // namespace

// ---- model-based position posterior ---------------------------------------

TEST_CASE("position posterior matches enumeration, two states") {
  ModelParams m = two_state_model();
  SpatialGrid grid = corridor(4);
  std::vector<std::vector<int>> counts = {{1, 0}, {0, 0}, {0, 3}, {2, 1}, {0, 0}};

  Mat post = op_position_posterior(m, grid, counts);
  REQUIRE(post.rows() == counts.size());
  REQUIRE(post.cols() == 4);
  for (int t = 1; t <= 5; ++t) {
    Vec expect = oracle::brute_position_posterior_at(m, grid, counts, t);
    for (int x = 0; x < 4; ++x) CHECK(post(t - 1, x) == doctest::Approx(expect[x]).epsilon(1e-10));
  }
}

TEST_CASE("position posterior matches enumeration, three states") {
  ModelParams m = three_state_model();
  SpatialGrid grid = corridor(5);
  std::vector<std::vector<int>> counts = {{1, 0}, {0, 2}, {0, 0}, {2, 1}};

  Mat post = op_position_posterior(m, grid, counts);
  for (int t = 1; t <= 4; ++t) {
    Vec expect = oracle::brute_position_posterior_at(m, grid, counts, t);
    for (int x = 0; x < 5; ++x) CHECK(post(t - 1, x) == doctest::Approx(expect[x]).epsilon(1e-10));
  }
}

TEST_CASE("position posterior rows are normalised") {
  ModelParams m = three_state_model();
  SpatialGrid grid = corridor(5);
  std::vector<std::vector<int>> counts = {{0, 1}, {1, 1}, {0, 0}, {3, 0}, {0, 0}, {1, 2}};
  Mat post = op_position_posterior(m, grid, counts);
  for (std::size_t t = 0; t < post.rows(); ++t) {
    double total = 0.0;
    for (std::size_t x = 0; x < post.cols(); ++x) {
      total += post(t, x);
      CHECK(post(t, x) >= 0.0);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

// ---- trajectory decoder -----------------------------------------------------

TEST_CASE("trajectory decoder matches exhaustive maximisation, two states") {
  ModelParams m = two_state_model();
  SpatialGrid grid = corridor(4);
  std::vector<std::vector<int>> counts = {{2, 0}, {1, 0}, {0, 2}, {0, 1}};

  std::vector<int> decoded = op_viterbi_positions(m, grid, counts);
  std::vector<int> expect = brute_best_labels(m, grid, counts);
  CHECK(decoded == expect);
}

TEST_CASE("trajectory decoder matches exhaustive maximisation, three states") {
  ModelParams m = three_state_model();
  SpatialGrid grid = corridor(5);
  std::vector<std::vector<int>> counts = {{1, 0}, {0, 0}, {0, 2}};

  std::vector<int> decoded = op_viterbi_positions(m, grid, counts);
  std::vector<int> expect = brute_best_labels(m, grid, counts);
  CHECK(decoded == expect);
}

TEST_CASE("trajectory decoder fails loudly when every trajectory vanishes") {
  ModelParams m = two_state_model();
  m.lambda = Mat(2, 2, 0.0);  // no rate anywhere, yet a spike is observed
  SpatialGrid grid = corridor(4);
  std::vector<std::vector<int>> counts = {{1, 0}};
  CHECK_THROWS_AS(op_viterbi_positions(m, grid, counts), numerical_error);
}

// ---- memoryless Bayesian baseline ------------------------------------------

namespace {

BinnedDataset bd_training() {
  BinnedDataset d;
  d.dt = 0.5;
  d.n_cells = 2;
  d.counts = {{1, 0}, {2, 1}, {0, 0}, {1, 3}, {0, 1}};
  d.positions = {1, 2, 2, 3, 1};
  return d;
}

}  // namespace

TEST_CASE("baseline rate maps use add-one-half smoothing and phantom exposure") {
  SpatialGrid grid = corridor(4);
  BdModel bd = fit_bd(bd_training(), grid);

  // occupancy (2, 2, 1, 0) bins; spike sums per position and cell below.
  double expect_rates[4][2] = {
      {1.0, 1.0}, {2.5 / 1.5, 1.0}, {1.5, 3.5}, {1.0, 1.0}};
  for (int x = 0; x < 4; ++x)
    for (int n = 0; n < 2; ++n)
      CHECK(bd.rates(x, n) == doctest::Approx(expect_rates[x][n]).epsilon(1e-12));

  double expect_prior[4] = {2.5 / 7.0, 2.5 / 7.0, 1.5 / 7.0, 0.5 / 7.0};
  for (int x = 0; x < 4; ++x)
    CHECK(bd.log_prior[x] == doctest::Approx(std::log(expect_prior[x])).epsilon(1e-12));
  CHECK(bd.dt == 0.5);
}

TEST_CASE("baseline fit requires tracked training data") {
  SpatialGrid grid = corridor(4);
  BinnedDataset d = bd_training();
  d.positions.clear();
  CHECK_THROWS_AS(fit_bd(d, grid), data_error);
  d = bd_training();
  d.positions[2] = 9;  // off the map
  CHECK_THROWS_AS(fit_bd(d, grid), data_error);
}

TEST_CASE("per-bin posterior matches hand Bayes arithmetic") {
  SpatialGrid grid = corridor(4);
  BdModel bd = fit_bd(bd_training(), grid);

  std::vector<std::vector<int>> counts = {{1, 0}, {0, 0}, {2, 3}};
  Mat post = bd_position_posterior(bd, counts, 0.5);
  double expect[3][4] = {
      {0.385351109538, 0.460193559248, 0.077385109306, 0.077070221908},
      {0.487707477712, 0.349457678181, 0.065293348564, 0.097541495542},
      {0.062090908871, 0.123583556412, 0.801907352943, 0.012418181774}};
  for (int t = 0; t < 3; ++t)
    for (int x = 0; x < 4; ++x) CHECK(post(t, x) == doctest::Approx(expect[t][x]).epsilon(1e-9));

  std::vector<int> map = bd_map_positions(bd, counts, 0.5);
  CHECK(map == std::vector<int>{2, 1, 3});
}

TEST_CASE("per-bin decoder breaks ties toward the lower label") {
  SpatialGrid grid = corridor(2);
  BinnedDataset d;
  d.dt = 0.5;
  d.n_cells = 1;
  d.counts = {{1}, {1}};
  d.positions = {1, 2};
  BdModel bd = fit_bd(d, grid);
  // Both positions end up with identical rates and prior mass.
  std::vector<std::vector<int>> counts = {{0}, {3}};
  Mat post = bd_position_posterior(bd, counts, 0.5);
  CHECK(post(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(post(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(bd_map_positions(bd, counts, 0.5) == std::vector<int>{1, 1});
}

// ---- position-state chain baseline -----------------------------------------

TEST_CASE("position-chain kernel rows follow the squared-distance weights") {
  SpatialGrid grid = corridor(4);
  LpModel lp = fit_lp(bd_training(), grid);  // default bandwidth 2 * cell size
  double expect[4][4] = {
      {0.355406439062, 0.313645081631, 0.21556490195, 0.115383577357},
      {0.2617501109, 0.296601733256, 0.2617501109, 0.179898044944},
      {0.179898044944, 0.2617501109, 0.296601733256, 0.2617501109},
      {0.115383577357, 0.21556490195, 0.313645081631, 0.355406439062}};
  for (int x = 0; x < 4; ++x) {
    double total = 0.0;
    for (int y = 0; y < 4; ++y) {
      CHECK(std::exp(lp.log_trans(x, y)) == doctest::Approx(expect[x][y]).epsilon(1e-9));
      total += std::exp(lp.log_trans(x, y));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Same smoothed rate maps as the per-bin baseline.
  BdModel bd = fit_bd(bd_training(), grid);
  for (int x = 0; x < 4; ++x)
    for (int n = 0; n < 2; ++n) CHECK(lp.rates(x, n) == doctest::Approx(bd.rates(x, n)));
}

TEST_CASE("position-chain decoding matches exhaustive path maximisation") {
  SpatialGrid grid = corridor(3);
  BinnedDataset train;
  train.dt = 0.4;
  train.n_cells = 2;
  train.counts = {{2, 0}, {1, 1}, {0, 2}, {1, 0}, {1, 0}};
  train.positions = {1, 2, 3, 2, 1};
  LpModel lp = fit_lp(train, grid);

  std::vector<std::vector<int>> counts = {{1, 0}, {0, 0}, {0, 1}, {0, 2}};
  std::vector<int> decoded = lp_viterbi_positions(lp, counts, 0.4);

  // Brute force over the 3^4 position paths with the same scoring pieces.
  auto emit = [&](int x, const std::vector<int>& y) {
    double e = 0.0;
    for (int n = 0; n < 2; ++n) {
      double mu = 0.4 * lp.rates(x - 1, n);
      e += -mu + y[n] * std::log(mu);
    }
    return e;
  };
  std::vector<int> seq(4, 1), best_seq;
  double best = NEG_INF;
  while (true) {
    double v = -std::log(3.0) + emit(seq[0], counts[0]);
    for (int t = 1; t < 4; ++t) v += lp.log_trans(seq[t - 1] - 1, seq[t] - 1) + emit(seq[t], counts[t]);
    if (v > best + 1e-12) {
      best = v;
      best_seq = seq;
    }
    int pos = 3;
    while (pos >= 0 && seq[pos] == 3) seq[pos--] = 1;
    if (pos < 0) break;
    ++seq[pos];
  }
  CHECK(decoded == best_seq);
}

// ---- error metrics -----------------------------------------------------------

TEST_CASE("decoding metrics compute the median geodesic error") {
  SpatialGrid grid = corridor(4, 2.0);
  DecodeMetrics m =
      decoding_metrics({1, 2, 3}, {1, 3, 1}, grid);  // errors 0, 2, 4 in distance units
  CHECK(m.median_geodesic_error == doctest::Approx(2.0));
  CHECK(std::isnan(m.mean_posterior_at_truth));

  DecodeMetrics even = decoding_metrics({1, 2}, {2, 4}, grid);  // errors 2, 4
  CHECK(even.median_geodesic_error == doctest::Approx(3.0));
}

TEST_CASE("decoding metrics average the posterior at the truth") {
  SpatialGrid grid = corridor(4);
  Mat post(2, 4, 0.0);
  post(0, 1) = 0.25;  // truth 2 at t=0
  post(1, 3) = 0.5;   // truth 4 at t=1
  DecodeMetrics m = decoding_metrics({1, 1}, {2, 4}, grid, &post);
  CHECK(m.mean_posterior_at_truth == doctest::Approx(0.375));
}

TEST_CASE("decoding metrics reject malformed input") {
  SpatialGrid grid = corridor(4);
  CHECK_THROWS_AS(decoding_metrics({1, 2}, {1}, grid), data_error);
  CHECK_THROWS_AS(decoding_metrics({}, {}, grid), data_error);
  Mat post(1, 4, 0.25);
  CHECK_THROWS_AS(decoding_metrics({1, 2}, {1, 2}, grid, &post), data_error);
}
