#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ophmm/conjugate.hpp"
#include "ophmm/grid.hpp"
#include "ophmm/model.hpp"
#include "ophmm/rng.hpp"
#include "oracle_helpers.hpp"

using namespace ophmm;

namespace {

SpatialGrid corridor(int n) {
  std::vector<SpatialGrid::Cell> cells;
  for (int c = 0; c < n; ++c) cells.push_back({0, c});
  return SpatialGrid::from_cells(1.0, Vec2{0.0, 0.0}, 1, n, cells);
}

constexpr int N_DRAWS = 100000;
constexpr double KS_TOL = 0.01;  // CDF sup-error budget at 1e5 draws

}  // namespace

TEST_CASE("path statistics count transitions, first arrivals, and emissions") {
  Mat P(3, 3);
  double vals[9] = {0.6, 0.3, 0.1, 0.2, 0.6, 0.2, 0.3, 0.2, 0.5};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) P(i, j) = vals[3 * i + j];
  AugmentedChain chain(P);

  BinnedDataset data;
  data.dt = 0.1;
  data.n_cells = 2;
  data.counts = {{1, 0}, {0, 2}, {3, 0}, {0, 0}, {1, 1}};
  data.positions = {1, 2, 1, 3, 3};

  // Base path 1, 2, 1, 3, 3 from s_0 = 1, as augmented indices.
  std::vector<int> aug = {
      AugmentedChain::index(1, 1), AugmentedChain::index(1, 1), AugmentedChain::index(2, 2),
      AugmentedChain::index(1, 2), AugmentedChain::index(3, 3), AugmentedChain::index(3, 3)};
  SufficientStats st = stats_from_path(chain, aug, data, 3);
  st.check_consistency();

  CHECK(st.A(0, 0) == 1);  // s_0 -> s_1
  CHECK(st.A(0, 1) == 1);
  CHECK(st.A(1, 0) == 1);
  CHECK(st.A(0, 2) == 1);
  CHECK(st.A(2, 2) == 1);
  CHECK(st.B(0, 1) == 1);  // first 2 follows 1
  CHECK(st.B(0, 2) == 1);  // first 3 follows 1
  CHECK(st.B(0, 0) == 0);  // state 1 was seen at t = 0
  CHECK(st.c == std::vector<long>{2, 1, 2});
  CHECK(st.spike_sums(0, 0) == 4);  // bins 1 and 3
  CHECK(st.spike_sums(0, 1) == 0);
  CHECK(st.spike_sums(1, 1) == 2);
  CHECK(st.spike_sums(2, 0) == 1);
  CHECK(st.spike_sums(2, 1) == 1);
  CHECK(st.pos_hist(0, 0) == 2);  // state 1 at labels 1, 1
  CHECK(st.pos_hist(1, 1) == 1);
  CHECK(st.pos_hist(2, 2) == 2);
  CHECK(st.pos_count(1) == 2);

  CHECK_THROWS_AS(stats_from_path(chain, {0, 0}, data, 3), data_error);
}

TEST_CASE("transition row full conditional is the generalised Dirichlet by hand") {
  // Row 1 with A = [3, 1], B = [0, 1]: P_11 ~ Beta(4, 2), mean 2/3.
  SufficientStats st = SufficientStats::empty(2, 1, 1);
  st.A(0, 0) = 3;
  st.A(0, 1) = 1;
  st.B(0, 1) = 1;
  Hyperparams hp;

  RngStream rng(2024);
  std::vector<double> p11;
  double mean = 0.0;
  for (int i = 0; i < N_DRAWS; ++i) {
    Vec row = sample_transition_row(st, 1, hp, rng);
    REQUIRE(row.size() == 2);
    CHECK(row[0] + row[1] == doctest::Approx(1.0).epsilon(1e-12));
    p11.push_back(row[0]);
    mean += row[0];
  }
  mean /= N_DRAWS;
  // Beta(4,2): mean 2/3, sd = sqrt(8/(36*7)) ~ 0.178.
  CHECK(std::fabs(mean - 2.0 / 3.0) < 4.0 * 0.178 / std::sqrt(N_DRAWS));
  double ks = oracle::ks_statistic(p11, [](double x) { return oracle::beta_cdf(x, 4.0, 2.0); });
  CHECK(ks < KS_TOL);
}

TEST_CASE("a row with no observations draws from the flat Dirichlet prior") {
  SufficientStats st = SufficientStats::empty(2, 1, 1);
  Hyperparams hp;
  RngStream rng(99);
  std::vector<double> p21;
  for (int i = 0; i < N_DRAWS; ++i) p21.push_back(sample_transition_row(st, 2, hp, rng)[0]);
  // Dirichlet(1,1) marginal is uniform.
  double ks = oracle::ks_statistic(p21, [](double x) { return std::min(1.0, std::max(0.0, x)); });
  CHECK(ks < KS_TOL);
}

TEST_CASE("generalised Dirichlet with no first arrivals reduces to the Dirichlet") {
  // zeta = (1,1,1), gamma = 0: coordinates are Dirichlet(1,1,1).
  Vec zeta = {1.0, 1.0, 1.0}, gamma = {0.0, 0.0, 0.0};
  RngStream rng(7);
  std::vector<double> first, second;
  for (int i = 0; i < N_DRAWS; ++i) {
    Vec row = generalised_dirichlet_row(zeta, gamma, rng);
    REQUIRE(row.size() == 3);
    CHECK(row[0] + row[1] + row[2] == doctest::Approx(1.0).epsilon(1e-12));
    first.push_back(row[0]);
    second.push_back(row[1]);
  }
  // Marginal of each Dirichlet(1,1,1) coordinate is Beta(1,2).
  auto beta12 = [](double x) { return oracle::beta_cdf(x, 1.0, 2.0); };
  CHECK(oracle::ks_statistic(first, beta12) < KS_TOL);
  CHECK(oracle::ks_statistic(second, beta12) < KS_TOL);

  // Two-sample test against a direct gamma-normalisation Dirichlet sampler
  // at the 1% level.
  RngStream rng2(8);
  std::vector<double> direct;
  for (int i = 0; i < N_DRAWS; ++i) {
    double g1 = rng2.gamma(1.0, 1.0), g2 = rng2.gamma(1.0, 1.0), g3 = rng2.gamma(1.0, 1.0);
    direct.push_back(g1 / (g1 + g2 + g3));
  }
  double d = oracle::ks_two_sample(first, direct);
  CHECK(d < oracle::ks_two_sample_critical(first.size(), direct.size(), 0.01));
}

TEST_CASE("asymmetric generalised Dirichlet sticks have the documented Beta laws") {
  // With zeta = (2, 3, 1), gamma = (1, 0, 0): V_1 ~ Beta(2, 4).
  Vec zeta = {2.0, 3.0, 1.0}, gamma = {1.0, 0.0, 0.0};
  RngStream rng(17);
  std::vector<double> v1;
  for (int i = 0; i < N_DRAWS; ++i) v1.push_back(generalised_dirichlet_row(zeta, gamma, rng)[0]);
  CHECK(oracle::ks_statistic(v1, [](double x) { return oracle::beta_cdf(x, 2.0, 4.0); }) < KS_TOL);
}

TEST_CASE("firing-rate full conditional is the documented Gamma law") {
  SufficientStats st = SufficientStats::empty(1, 2, 1);
  st.spike_sums(0, 0) = 7;
  st.spike_sums(0, 1) = 0;
  st.c[0] = 4;
  Hyperparams hp;  // alpha 0.5, beta 0.01
  double dt = 0.25;

  RngStream rng(41);
  std::vector<double> cell1, cell2;
  for (int i = 0; i < N_DRAWS; ++i) {
    Vec row = sample_lambda_row(st, 1, hp, dt, rng);
    cell1.push_back(row[0]);
    cell2.push_back(row[1]);
  }
  double rate = 0.25 * 4 + 0.01;
  CHECK(oracle::ks_statistic(cell1, [&](double x) { return oracle::gamma_cdf(x, 7.5, rate); }) <
        KS_TOL);
  CHECK(oracle::ks_statistic(cell2, [&](double x) { return oracle::gamma_cdf(x, 0.5, rate); }) <
        KS_TOL);
}

TEST_CASE("inverse-Wishart sampler matches its marginal law and mean") {
  Sym2 psi{2.0, 0.4, 3.0};
  double dof = 7.0;
  RngStream rng(5150);
  std::vector<double> xx;
  double mxx = 0.0, mxy = 0.0, myy = 0.0;
  for (int i = 0; i < N_DRAWS; ++i) {
    Sym2 s = sample_inverse_wishart(psi, dof, rng);
    REQUIRE(s.positive_definite());
    xx.push_back(s.xx);
    mxx += s.xx;
    mxy += s.xy;
    myy += s.yy;
  }
  // Mean is psi / (dof - 3).
  CHECK(mxx / N_DRAWS == doctest::Approx(2.0 / 4.0).epsilon(0.03));
  CHECK(mxy / N_DRAWS == doctest::Approx(0.4 / 4.0).epsilon(0.06));
  CHECK(myy / N_DRAWS == doctest::Approx(3.0 / 4.0).epsilon(0.03));
  // 2x2 marginal: sigma_xx ~ InvGamma((dof-1)/2, psi_xx/2).
  CHECK(oracle::ks_statistic(xx, [&](double x) {
          return oracle::inverse_gamma_cdf(x, (dof - 1.0) / 2.0, psi.xx / 2.0);
        }) < KS_TOL);
}

TEST_CASE("covariance full conditional concentrates on the visit scatter") {
  SpatialGrid g = corridor(5);
  // State 1 visited label 2 forty times and label 4 sixty times.
  SufficientStats st = SufficientStats::empty(1, 1, 5);
  for (int i = 0; i < 40; ++i) st.update(1, 1, false, std::vector<int>{0}, 2);
  for (int i = 0; i < 60; ++i) st.update(1, 1, false, std::vector<int>{0}, 4);
  Hyperparams hp;
  int xi = embedded_mean_minimiser(st, 1, g);
  // Mean embedded visit from x: ((2-x)*0.4 + (4-x)*0.6) -> zero at 3.2; label 3.
  CHECK(xi == 3);

  Sym2 scatter = scatter_matrix(st, 1, xi, g);
  // f_3(2) = (-1, 0), f_3(4) = (1, 0): scatter_xx = 40 + 60 = 100.
  CHECK(scatter.xx == doctest::Approx(100.0));
  CHECK(scatter.xy == doctest::Approx(0.0));
  CHECK(scatter.yy == doctest::Approx(0.0));

  // IW(psi + scatter, delta + 100) has mean (psi + scatter)/(delta + 100 - 3).
  RngStream rng(31);
  double mean_xx = 0.0;
  for (int i = 0; i < 20000; ++i) mean_xx += sample_sigma(st, 1, xi, hp, g, rng).xx;
  mean_xx /= 20000;
  CHECK(mean_xx == doctest::Approx((hp.psi.xx + 100.0) / (hp.delta + 100.0 - 3.0)).epsilon(0.02));
}

TEST_CASE("place-centre full conditional has the documented categorical weights") {
  SpatialGrid g = corridor(3);
  SufficientStats st = SufficientStats::empty(1, 1, 3);
  // Visits [1, 1, 3]: embedded-mean minimiser is label 2.
  st.update(1, 1, false, std::vector<int>{0}, 1);
  st.update(1, 1, false, std::vector<int>{0}, 1);
  st.update(1, 1, false, std::vector<int>{0}, 3);
  CHECK(embedded_mean_minimiser(st, 1, g) == 2);

  Sym2 sigma{0.5, 0.0, 0.5};
  // Weights: exp(-0.5 * f_2(x)' (sigma/3)^{-1} f_2(x)), distances 1, 0, 1.
  double w_side = std::exp(-0.5 * 3.0 / 0.5), w_mid = 1.0;
  double z = 2.0 * w_side + w_mid;
  RngStream rng(12);
  int hits[3] = {0, 0, 0};
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++hits[sample_xi(st, 1, sigma, g, rng) - 1];
  for (int x = 0; x < 3; ++x) {
    double p = (x == 1 ? w_mid : w_side) / z;
    double se = std::sqrt(p * (1.0 - p) / n);
    CHECK(std::fabs(hits[x] / static_cast<double>(n) - p) < 4.0 * se + 1e-4);
  }
}

TEST_CASE("states without position observations draw the centre uniformly") {
  SpatialGrid g = corridor(4);
  SufficientStats st = SufficientStats::empty(1, 1, 4);
  RngStream rng(3);
  int hits[4] = {0, 0, 0, 0};
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++hits[sample_xi(st, 1, Sym2{1, 0, 1}, g, rng) - 1];
  for (int x = 0; x < 4; ++x)
    CHECK(std::fabs(hits[x] / static_cast<double>(n) - 0.25) < 4.0 * std::sqrt(0.25 * 0.75 / n));
}

TEST_CASE("prior draws are valid models of the requested size") {
  SpatialGrid g = corridor(6);
  Hyperparams hp;
  RngStream rng(777);
  ModelParams m = sample_prior(hp, 3, 4, 0.1, g, rng);
  CHECK(m.kappa == 3);
  CHECK(m.n_cells == 4);
  CHECK(m.dt == 0.1);
  CHECK_NOTHROW(m.validate(g));

  // Prior rows are flat Dirichlet; prior rates Gamma(alpha, beta).
  RngStream rng2(778);
  double mean_rate = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    ModelParams d = sample_prior(hp, 1, 1, 0.1, g, rng2);
    mean_rate += d.lambda(0, 0);
  }
  // Gamma(0.5, 0.01): mean 50, sd ~ 70.7.
  CHECK(mean_rate / n == doctest::Approx(50.0).epsilon(0.05));
}

TEST_CASE("a Gibbs sweep with overwhelming data lands near the empirical values") {
  SpatialGrid g = corridor(3);
  Hyperparams hp;
  // Two states: state 1 fires cell 1 at 10 Hz at label 1, state 2 fires
  // cell 2 at 5 Hz at label 3. Build stats for a long alternating path.
  SufficientStats st = SufficientStats::empty(2, 2, 3);
  RngStream path_rng(1);
  int prev = 1;
  bool seen2 = false;
  double dt = 0.1;
  for (int t = 0; t < 20000; ++t) {
    int cur = (path_rng.uniform() < 0.9) ? prev : 3 - prev;
    bool first = (cur == 2 && !seen2);
    if (cur == 2) seen2 = true;
    std::vector<int> y = {0, 0};
    y[0] = static_cast<int>(path_rng.poisson(cur == 1 ? 1.0 : 0.02));
    y[1] = static_cast<int>(path_rng.poisson(cur == 2 ? 0.5 : 0.02));
    st.update(prev, cur, first, y, cur == 1 ? 1 : 3);
    prev = cur;
  }

  ModelParams m;
  m.kappa = 2;
  m.n_cells = 2;
  m.dt = dt;
  m.P = Mat(2, 2);
  m.P(0, 0) = m.P(1, 1) = 0.5;
  m.P(0, 1) = m.P(1, 0) = 0.5;
  m.lambda = Mat(2, 2, 1.0);
  m.xi = {2, 2};
  m.sigma = {Sym2{1, 0, 1}, Sym2{1, 0, 1}};

  RngStream rng(4242);
  gibbs_sweep(m, st, hp, g, rng);
  CHECK_NOTHROW(m.validate(g));
  CHECK(m.lambda(0, 0) == doctest::Approx(10.0).epsilon(0.1));
  CHECK(m.lambda(1, 1) == doctest::Approx(5.0).epsilon(0.1));
  CHECK(m.lambda(0, 1) < 1.0);
  CHECK(m.lambda(1, 0) < 1.0);
  CHECK(m.P(0, 0) == doctest::Approx(0.9).epsilon(0.05));
  CHECK(m.P(1, 1) == doctest::Approx(0.9).epsilon(0.05));
  CHECK(m.xi[0] == 1);
  CHECK(m.xi[1] == 3);
}

TEST_CASE("derived streams are deterministic and independent of call order") {
  RngStream a = RngStream::derive(42, {1, 2, 3});
  RngStream b = RngStream::derive(42, {1, 2, 3});
  RngStream c = RngStream::derive(42, {1, 2, 4});
  double va = a.uniform(), vb = b.uniform(), vc = c.uniform();
  CHECK(va == vb);
  CHECK(va != vc);
}
