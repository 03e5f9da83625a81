#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "bmfpca/errors.hpp"
#include "bmfpca/model.hpp"
#include "support.hpp"

using namespace bmfpca;

TEST(Hyperparameters, Defaults) {
  Hyperparameters h;
  EXPECT_DOUBLE_EQ(h.sigma_beta, 1e5);
  EXPECT_DOUBLE_EQ(h.A, 1e5);
  EXPECT_DOUBLE_EQ(h.tau, 1e-5);
  EXPECT_EQ(h.max_iter, 500);
  EXPECT_NO_THROW(h.check());
  h.K = {4};
  EXPECT_THROW(h.check(), ConfigError);
  h.K = {7};
  h.L = 0;
  EXPECT_THROW(h.check(), ConfigError);
}

TEST(Prior, ScoresAndGlobalScale) {
  Hyperparameters h;
  h.L = 2;
  const PriorParams prior = prior_natural_params(h);
  const auto m = gauss_from_natural(prior.zeta);
  EXPECT_EQ(m.mean, Eigen::Vector2d::Zero());
  EXPECT_EQ(m.cov, Eigen::Matrix2d::Identity());
  EXPECT_DOUBLE_EQ(prior.a.eta2, -5e-11);
  EXPECT_DOUBLE_EQ(prior.a.eta1, -1.5);
  EXPECT_DOUBLE_EQ(prior.sigma_beta_sq, 1e10);
}

TEST(Initialize, DeterministicAndProper) {
  const auto [data, truth] = generate_dataset(testkit::small_scenario(2));
  Hyperparameters h;
  h.L = 3;
  const auto dims = ModelDims::from(data, h);
  const auto designs = build_designs(data, build_bases(dims.K));
  const auto a = initialize_state(data, designs, dims, h);
  const auto b = initialize_state(data, designs, dims, h);
  for (std::size_t j = 0; j < dims.p; ++j) {
    EXPECT_EQ(a.nu[j].eta1, b.nu[j].eta1);
    EXPECT_EQ(a.nu[j].eta2, b.nu[j].eta2);
    EXPECT_TRUE(a.sigma_eps[j].proper());
  }
  h.seed = 2;
  const auto c = initialize_state(data, designs, dims, h);
  EXPECT_NE(a.nu[0].eta1, c.nu[0].eta1);
  // scores start at the prior
  const auto z = gauss_from_natural(a.zeta[0]);
  EXPECT_EQ(z.cov, Eigen::MatrixXd::Identity(3, 3));
}

TEST(Initialize, PooledFitReproducesNoiselessMean) {
  // x = 1 + 2t lies in the span of the intercept and slope columns.
  std::vector<std::vector<Series>> series(4, std::vector<Series>(1));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u;
  for (auto& row : series) {
    std::vector<double> t(6);
    for (auto& x : t) x = u(rng);
    std::sort(t.begin(), t.end());
    row[0].times = Eigen::Map<Eigen::VectorXd>(t.data(), 6);
    row[0].values = (1.0 + 2.0 * row[0].times.array()).matrix();
  }
  const FunctionalDataset data({"a", "b", "c", "d"}, {"v"}, series);
  Hyperparameters h;
  h.L = 1;
  h.K = {5};
  const auto dims = ModelDims::from(data, h);
  const auto bases = build_bases(dims.K);
  const auto designs = build_designs(data, bases);
  const auto state = initialize_state(data, designs, dims, h);
  const Eigen::VectorXd mean = gauss_from_natural(state.nu[0]).mean.head(dims.coef_dim(0));
  for (std::size_t i = 0; i < data.n(); ++i) {
    const Eigen::VectorXd fit = designs[0][i].C * mean;
    // exact up to the bias of the 1e-6 ridge
    EXPECT_LT((fit - data.series(i, 0).values).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Initialize, FallbackWhenTooFewPooledObservations) {
  std::vector<std::vector<Series>> series(2, std::vector<Series>(1));
  for (auto& row : series) {
    row[0].times = Eigen::Vector3d(0.1, 0.5, 0.9);
    row[0].values = Eigen::Vector3d(1, 2, 3);
  }
  const FunctionalDataset data({"a", "b"}, {"v"}, series);
  Hyperparameters h;
  h.L = 1;
  h.K = {20};
  const auto dims = ModelDims::from(data, h);
  const auto designs = build_designs(data, build_bases(dims.K));
  const auto state = initialize_state(data, designs, dims, h);
  const auto m = gauss_from_natural(state.nu[0]);
  EXPECT_EQ(m.mean.head(dims.coef_dim(0)), Eigen::VectorXd::Zero(dims.coef_dim(0)));
  EXPECT_NO_THROW(refresh_moments(state, designs, dims));
}

TEST(Designs, MatchBasisAndData) {
  const auto [data, truth] = generate_dataset(testkit::small_scenario(6));
  Hyperparameters h;
  const auto dims = ModelDims::from(data, h);
  const auto bases = build_bases(dims.K);
  const auto designs = build_designs(data, bases);
  const auto& sd = designs[1][4];
  const auto& s = data.series(4, 1);
  EXPECT_EQ(sd.count, static_cast<int>(s.size()));
  EXPECT_LT((sd.C - bases[1].design(s.times)).norm(), 1e-15);
  EXPECT_NEAR(sd.xtx, s.values.squaredNorm(), 1e-12);
  EXPECT_LT((sd.Ctx - sd.C.transpose() * s.values).norm(), 1e-12);
}

TEST(Moments, DegenerateCovarianceDropsTraceTerm) {
  // d = 3 coefficients, L = 1, one subject with C = e_1^T; nu_psi = e_1, nu_mu = 0.
  ModelDims dims;
  dims.n = 1;
  dims.p = 1;
  dims.L = 1;
  dims.K = {1};
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(1, 3);
  C(0, 0) = 1.0;
  Designs designs{{testkit::design_from(C, Eigen::VectorXd::Constant(1, 2.0))}};
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(6);
  nu[3] = 1.0;
  const auto state = testkit::state_from_moments(
      dims, {nu}, {1e-12 * Eigen::MatrixXd::Identity(6, 6)}, {Eigen::VectorXd::Zero(1)},
      {Eigen::MatrixXd::Identity(1, 1)});
  const auto cache = refresh_moments(state, designs, dims);
  EXPECT_NEAR(cache.h_mupsi(0, 0)[0], 0.0, 1e-10);
  EXPECT_NEAR(cache.H_psi(0, 0)(0, 0), 1.0, 1e-10);
  EXPECT_NEAR(cache.h_mu(0, 0), 0.0, 1e-10);
}

// Brute-force Monte Carlo over q for the cached second moments and the
// expected residual sum of squares.
TEST(Moments, MonteCarloOracle) {
  std::mt19937_64 rng(21);
  ModelDims dims;
  dims.n = 1;
  dims.p = 1;
  dims.L = 1;
  dims.K = {1};
  const int d = 3, D = 6;
  const Eigen::MatrixXd C = testkit::random_vector(4 * d, rng).reshaped(4, d);
  const Eigen::VectorXd x = testkit::random_vector(4, rng);
  Designs designs{{testkit::design_from(C, x)}};
  const Eigen::VectorXd nu_mean = testkit::random_vector(D, rng);
  const Eigen::MatrixXd nu_cov = 0.3 * testkit::random_spd(D, rng, 0.2);
  const Eigen::VectorXd z_mean = testkit::random_vector(1, rng);
  const Eigen::MatrixXd z_cov = Eigen::MatrixXd::Constant(1, 1, 0.7);
  const auto state = testkit::state_from_moments(dims, {nu_mean}, {nu_cov}, {z_mean}, {z_cov});
  const auto cache = refresh_moments(state, designs, dims);

  const Eigen::MatrixXd Lnu = nu_cov.llt().matrixL();
  std::normal_distribution<double> normal;
  const int n = 1000000;
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(2, 2), s2 = Eigen::MatrixXd::Zero(2, 2);
  double r1 = 0, r2 = 0;
  Eigen::VectorXd e(D);
  for (int k = 0; k < n; ++k) {
    for (int r = 0; r < D; ++r) e[r] = normal(rng);
    const Eigen::VectorXd v = nu_mean + Lnu * e;
    const Eigen::Map<const Eigen::MatrixXd> V(v.data(), d, 2);
    const Eigen::MatrixXd CV = C * V;
    const Eigen::Matrix2d h = CV.transpose() * CV;
    s1 += h;
    s2 += h.cwiseProduct(h);
    const double zeta = z_mean[0] + std::sqrt(z_cov(0, 0)) * normal(rng);
    const double rss = (x - CV * Eigen::Vector2d(1.0, zeta)).squaredNorm();
    r1 += rss;
    r2 += rss * rss;
  }
  const Eigen::MatrixXd mean = s1 / n;
  const Eigen::MatrixXd se = ((s2 / n - mean.cwiseProduct(mean)) / n).cwiseSqrt();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) EXPECT_NEAR(cache.H[0][0](a, b), mean(a, b), 3 * se(a, b));
  const double rm = r1 / n, rse = std::sqrt((r2 / n - rm * rm) / n);
  EXPECT_NEAR(expected_rss(cache, designs, 0, 0), rm, 3 * rse);
}

TEST(Moments, PenalizedSquareNorm) {
  ModelDims dims;
  dims.n = 0;
  dims.p = 1;
  dims.L = 1;
  dims.K = {2};
  std::mt19937_64 rng(8);
  const Eigen::VectorXd m = testkit::random_vector(8, rng);
  const Eigen::MatrixXd S = testkit::random_spd(8, rng);
  const auto state = testkit::state_from_moments(dims, {m}, {S}, {}, {});
  const auto cache = refresh_moments(state, Designs(1), dims);
  // block 1 = psi_1, penalised part = entries 6..7
  const double expect = m.segment(6, 2).squaredNorm() + S.block(6, 6, 2, 2).trace();
  EXPECT_NEAR(expected_penalized_sq(cache, dims, 0, 1), expect, 1e-10);
  EXPECT_NEAR(expected_penalized_sq(cache, dims, 0, 0),
              m.segment(2, 2).squaredNorm() + S.block(2, 2, 2, 2).trace(), 1e-10);
}

TEST(Moments, ImproperScaleIsReported) {
  ModelDims dims;
  dims.n = 0;
  dims.p = 1;
  dims.L = 1;
  dims.K = {1};
  auto state = testkit::state_from_moments(dims, {Eigen::VectorXd::Zero(6)},
                                           {Eigen::MatrixXd::Identity(6, 6)}, {}, {});
  state.sigma_eps[0] = {0.5, -1.0};
  EXPECT_THROW(refresh_moments(state, Designs(1), dims), NumericalError);
}
