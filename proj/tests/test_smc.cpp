#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ophmm/grid.hpp"
#include "ophmm/model.hpp"
#include "ophmm/sim.hpp"
#include "ophmm/smc.hpp"

using namespace ophmm;

namespace {

SpatialGrid corridor(int n) {
  std::vector<SpatialGrid::Cell> cells;
  for (int c = 0; c < n; ++c) cells.push_back({0, c});
  return SpatialGrid::from_cells(1.0, Vec2{0.0, 0.0}, 1, n, cells);
}

// Well-separated two-state model: distinct rates and distant place fields.
ModelParams easy_model() {
  ModelParams m;
  m.kappa = 2;
  m.n_cells = 3;
  m.dt = 0.1;
  m.P = Mat(2, 2);
  m.P(0, 0) = 0.92;
  m.P(0, 1) = 0.08;
  m.P(1, 0) = 0.10;
  m.P(1, 1) = 0.90;
  m.lambda = Mat(2, 3);
  double rates[6] = {8.0, 0.3, 4.0, 0.2, 7.0, 0.4};
  for (int i = 0; i < 2; ++i)
    for (int n = 0; n < 3; ++n) m.lambda(i, n) = rates[3 * i + n];
  m.xi = {2, 7};
  m.sigma = {Sym2{1.5, 0.0, 1.5}, Sym2{1.5, 0.0, 1.5}};
  return m;
}

}  // namespace

TEST_CASE("effective sample size follows the variance formula") {
  // Uniform weights: ESS = H.
  std::vector<double> w = {1.0, 1.0, 1.0, 1.0};
  CHECK(effective_sample_size(w) == doctest::Approx(4.0));
  // One particle carries everything: var = (2-1)^2+(0-1)^2 over 2 -> 1.
  std::vector<double> degenerate = {2.0, 0.0};
  CHECK(effective_sample_size(degenerate) == doctest::Approx(1.0));
  // Hand value: w = (1.5, 0.5, 1.0): var = (0.25+0.25+0)/3 = 1/6.
  std::vector<double> mid = {1.5, 0.5, 1.0};
  CHECK(effective_sample_size(mid) == doctest::Approx(3.0 / (1.0 + 1.0 / 6.0)));
}

TEST_CASE("config validation rejects unusable settings") {
  SmcConfig cfg;
  cfg.n_particles = 0;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = SmcConfig{};
  cfg.ess_threshold_frac = 1.5;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = SmcConfig{};
  cfg.subpop_floor_frac = -0.1;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = SmcConfig{};
  cfg.threads = 0;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  CHECK_NOTHROW(SmcConfig{}.validate());
}

TEST_CASE("pooled point estimate averages states over the particles that have them") {
  SpatialGrid g = corridor(8);
  Hyperparams hp = default_hyperparams(g);

  ModelParams small;  // one state
  small.kappa = 1;
  small.n_cells = 1;
  small.dt = 0.1;
  small.P = Mat(1, 1, 1.0);
  small.lambda = Mat(1, 1);
  small.lambda(0, 0) = 2.0;
  small.xi = {3};
  small.sigma = {Sym2{1.0, 0.0, 1.0}};

  ModelParams big;  // two states
  big.kappa = 2;
  big.n_cells = 1;
  big.dt = 0.1;
  big.P = Mat(2, 2);
  big.P(0, 0) = 0.6;
  big.P(0, 1) = 0.4;
  big.P(1, 0) = 0.3;
  big.P(1, 1) = 0.7;
  big.lambda = Mat(2, 1);
  big.lambda(0, 0) = 4.0;
  big.lambda(1, 0) = 6.0;
  big.xi = {5, 7};
  big.sigma = {Sym2{2.0, 0.0, 2.0}, Sym2{1.0, 0.0, 1.0}};

  std::vector<ParticleSummary> particles;
  particles.push_back({small, 1.2});
  particles.push_back({big, 0.8});

  ModelParams est = estimate_params_full(particles, hp, g, 2, 1, 0.1);
  CHECK(est.kappa == 2);
  // State 1 pools both particles: (1.2*2 + 0.8*4) / 2 = 2.8.
  CHECK(est.lambda(0, 0) == doctest::Approx(2.8).epsilon(1e-12));
  // State 2 exists only in the big particle.
  CHECK(est.lambda(1, 0) == doctest::Approx(6.0).epsilon(1e-12));
  // Row 1: the small particle's row zero-pads to (1, 0); weighted average
  // (1.2*1 + 0.8*0.6, 0.8*0.4)/2 = (0.84, 0.16), already normalised.
  CHECK(est.P(0, 0) == doctest::Approx(0.84).epsilon(1e-12));
  CHECK(est.P(0, 1) == doctest::Approx(0.16).epsilon(1e-12));
  // Row 2 only from the big particle.
  CHECK(est.P(1, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(est.P(1, 1) == doctest::Approx(0.7).epsilon(1e-12));
  // State-1 centre: weighted Frechet minimiser over labels of
  // 1.2*d(x,3)^2 + 0.8*d(x,5)^2 -> continuous minimum at 3.8 -> label 4.
  CHECK(est.xi[0] == 4);
  CHECK(est.xi[1] == 7);
  CHECK(est.sigma[1].xx == doctest::Approx(1.0));
  CHECK_NOTHROW(est.validate(g));
}

TEST_CASE("truncation keeps the leading states and renormalises rows") {
  ModelParams m = easy_model();
  m.kappa = 2;
  ModelParams t = truncate_model(m, 1);
  CHECK(t.kappa == 1);
  CHECK(t.P(0, 0) == doctest::Approx(1.0));
  CHECK(t.lambda.rows() == 1);
  CHECK(t.xi.size() == 1);
}

TEST_CASE("SPD projection repairs indefinite matrices and keeps PD ones") {
  Sym2 ok{2.0, 0.3, 1.0};
  Sym2 p = spd_project(ok);
  CHECK(p.xx == doctest::Approx(2.0));
  CHECK(p.xy == doctest::Approx(0.3));

  Sym2 bad{1.0, 2.0, 1.0};  // eigenvalues 3 and -1
  Sym2 fixed = spd_project(bad);
  CHECK(fixed.positive_definite());
  // The positive eigenvalue is preserved.
  double lo, hi;
  fixed.eigenvalues(lo, hi);
  CHECK(hi == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(lo > 0.0);
}

TEST_CASE("model-size estimation under a known model recovers the distinct count") {
  SpatialGrid g = corridor(8);
  ModelParams m = easy_model();
  SimResult sim = simulate(m, g, 400, 20250401);
  int k_hat = 0;
  Vec post;
  // Pad the true model to a 4-state candidate with two unreachable states.
  ModelParams full = m;
  full.kappa = 4;
  full.P = Mat(4, 4);
  full.P(0, 0) = 0.92;
  full.P(0, 1) = 0.08;
  full.P(1, 0) = 0.10;
  full.P(1, 1) = 0.90;
  full.P(2, 2) = 1.0;
  full.P(3, 3) = 1.0;
  full.lambda = Mat(4, 3, 30.0);
  for (int i = 0; i < 2; ++i)
    for (int n = 0; n < 3; ++n) full.lambda(i, n) = m.lambda(i, n);
  full.xi = {2, 7, 1, 1};
  full.sigma = {m.sigma[0], m.sigma[1], Sym2{1, 0, 1}, Sym2{1, 0, 1}};

  k_hat = estimate_kappa(full, sim.data, g, &post);
  CHECK(k_hat == 2);
  REQUIRE(post.size() == 4);
  CHECK(post[1] > 0.99);
}

TEST_CASE("the sampler recovers an easy two-state model and its size") {
  SpatialGrid g = corridor(8);
  ModelParams m = easy_model();
  SimResult sim = simulate(m, g, 800, 99);

  Hyperparams hp = default_hyperparams(g);
  hp.kappa_bar = 4;
  SmcConfig cfg;
  cfg.n_particles = 80;
  cfg.seed = 11;
  cfg.threads = 1;
  FitResult fit = fit_smc(sim.data, g, hp, cfg);

  CHECK(fit.kappa_hat == 2);
  CHECK(fit.params.kappa == 2);
  CHECK(fit.n_resamples > 0);
  CHECK_FALSE(fit.diagnostics.empty());
  // Recovered states are ordered by appearance and close to the truth.
  CHECK(std::abs(fit.params.xi[0] - m.xi[0]) <= 1);
  CHECK(std::abs(fit.params.xi[1] - m.xi[1]) <= 1);
  CHECK(fit.params.lambda(0, 0) == doctest::Approx(8.0).epsilon(0.30));
  CHECK(fit.params.lambda(1, 1) == doctest::Approx(7.0).epsilon(0.30));
  CHECK(fit.params.P(0, 0) == doctest::Approx(0.92).epsilon(0.08));
  CHECK(fit.params.P(1, 1) == doctest::Approx(0.90).epsilon(0.08));

  // Diagnostics rows carry a valid model-size posterior per step.
  const DiagnosticsRow& last = fit.diagnostics.back();
  double s = 0.0;
  for (double v : last.p_kappa) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(last.ess > 0.0);
}

TEST_CASE("fits are bit-reproducible across thread counts") {
  SpatialGrid g = corridor(8);
  ModelParams m = easy_model();
  SimResult sim = simulate(m, g, 300, 5);

  Hyperparams hp = default_hyperparams(g);
  hp.kappa_bar = 3;
  SmcConfig cfg;
  cfg.n_particles = 40;
  cfg.seed = 321;

  cfg.threads = 1;
  FitResult a = fit_smc(sim.data, g, hp, cfg);
  cfg.threads = 4;
  FitResult b = fit_smc(sim.data, g, hp, cfg);

  CHECK(a.kappa_hat == b.kappa_hat);
  REQUIRE(a.k_posterior.size() == b.k_posterior.size());
  for (std::size_t i = 0; i < a.k_posterior.size(); ++i)
    CHECK(a.k_posterior[i] == b.k_posterior[i]);  // bitwise
  REQUIRE(a.params_full.P.data().size() == b.params_full.P.data().size());
  for (std::size_t i = 0; i < a.params_full.P.data().size(); ++i)
    CHECK(a.params_full.P.data()[i] == b.params_full.P.data()[i]);
  for (std::size_t i = 0; i < a.params_full.lambda.data().size(); ++i)
    CHECK(a.params_full.lambda.data()[i] == b.params_full.lambda.data()[i]);
  CHECK(a.params_full.xi == b.params_full.xi);

  // And across repeated runs with the same seed.
  cfg.threads = 1;
  FitResult c = fit_smc(sim.data, g, hp, cfg);
  CHECK(c.kappa_hat == a.kappa_hat);
  for (std::size_t i = 0; i < a.k_posterior.size(); ++i)
    CHECK(c.k_posterior[i] == a.k_posterior[i]);
}
