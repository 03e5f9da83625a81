#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "bmfpca/engines.hpp"
#include "bmfpca/errors.hpp"
#include "bmfpca/likelihood_fragment.hpp"
#include "bmfpca/postprocess.hpp"
#include "support.hpp"

using namespace bmfpca;

namespace {

SimulationScenario desk_scenario(std::uint64_t seed) {
  SimulationScenario s;
  s.n = 50;
  s.p = 3;
  s.obs_min = 10;
  s.obs_max = 20;
  s.seed = seed;
  return s;
}

void expect_monotone(const std::vector<double>& trace, double rel) {
  for (std::size_t k = 1; k < trace.size(); ++k) {
    EXPECT_GE(trace[k] - trace[k - 1], -rel * std::abs(trace[k - 1])) << "sweep " << k + 1;
  }
}

}  // namespace

TEST(Engine, ParseAndPrint) {
  EXPECT_EQ(parse_engine("mfvb"), Engine::mfvb);
  EXPECT_EQ(parse_engine("vmp"), Engine::vmp);
  EXPECT_EQ(to_string(Engine::vmp), "vmp");
  EXPECT_THROW(parse_engine("gibbs"), ConfigError);
}

TEST(Kernels, IteratedAndPenalisationMessages) {
  const auto s = iterated_to_sigma({2.5, 0.0});
  EXPECT_DOUBLE_EQ(s.eta1, -1.5);
  EXPECT_DOUBLE_EQ(s.eta2, -1.25);
  const auto a = iterated_to_a({4.0, 0.0});
  EXPECT_DOUBLE_EQ(a.eta1, -0.5);
  EXPECT_DOUBLE_EQ(a.eta2, -2.0);

  ModelDims dims;
  dims.n = 0;
  dims.p = 1;
  dims.L = 1;
  dims.K = {3};
  std::mt19937_64 rng(2);
  const Eigen::VectorXd m = testkit::random_vector(10, rng);
  const Eigen::MatrixXd S = testkit::random_spd(10, rng);
  auto cache = refresh_moments(testkit::state_from_moments(dims, {m}, {S}, {}, {}), Designs(1), dims);
  cache.sigma_mu[0].recip = 3.0;
  cache.sigma_psi[0][0].recip = 7.0;
  const auto pen = penalization_to_sigma(cache, dims, 0, 1);
  EXPECT_DOUBLE_EQ(pen.eta1, -1.5);
  EXPECT_NEAR(pen.eta2, -0.5 * (m.segment(7, 3).squaredNorm() + S.block(7, 7, 3, 3).trace()),
              1e-12);

  Hyperparameters h;
  h.sigma_beta = 10.0;
  const Eigen::MatrixXd P = precision_of(penalization_to_nu(cache, dims, h, 0));
  Eigen::VectorXd diag(10);
  diag << 0.01, 0.01, 3, 3, 3, 0.01, 0.01, 7, 7, 7;
  EXPECT_LT((P - Eigen::MatrixXd(diag.asDiagonal())).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Fit, DeterministicTrace) {
  const auto [data, truth] = generate_dataset(testkit::small_scenario(5));
  Hyperparameters h;
  h.L = 3;
  const auto a = fit(data, h, Engine::mfvb);
  const auto b = fit(data, h, Engine::mfvb);
  EXPECT_EQ(a.elbo_trace, b.elbo_trace);
  EXPECT_EQ(a.dataset_fingerprint, dataset_fingerprint(data));
}

TEST(Fit, DeskScenarioMonotoneAndConverged) {
  const auto [data, truth] = generate_dataset(desk_scenario(1));
  Hyperparameters h;
  h.L = 4;
  const auto raw = fit(data, h, Engine::mfvb);
  EXPECT_TRUE(raw.converged);
  EXPECT_LE(raw.iterations, 500);
  EXPECT_EQ(raw.elbo_trace.size(), static_cast<std::size_t>(raw.iterations));
  expect_monotone(raw.elbo_trace, 1e-8);
  const double last = raw.elbo_trace.back(), prev = raw.elbo_trace[raw.elbo_trace.size() - 2];
  EXPECT_LT(std::abs((last - prev) / prev), h.tau);
}

TEST(Fit, ElboRecomputationIsExact) {
  const auto [data, truth] = generate_dataset(testkit::small_scenario(8));
  Hyperparameters h;
  h.L = 2;
  const auto raw = fit(data, h, Engine::mfvb);
  const auto designs = build_designs(data, raw.bases);
  const auto cache = refresh_moments(raw.state, designs, raw.dims);
  const double a = elbo(raw.state, cache, designs, raw.dims, h);
  const double b = elbo(raw.state, cache, designs, raw.dims, h);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a, raw.elbo_trace.back(), 1e-9 * std::abs(a));
}

TEST(Fit, VmpMessagesSumToQ) {
  const auto [data, truth] = generate_dataset(testkit::small_scenario(9));
  Hyperparameters h;
  h.L = 2;
  const auto raw = fit(data, h, Engine::vmp);
  ASSERT_TRUE(raw.messages.has_value());
  const VmpMessages& m = *raw.messages;
  const VariationalState& s = raw.state;
  for (std::size_t j = 0; j < raw.dims.p; ++j) {
    const auto nu = m.lik_to_nu[j] + m.pen_to_nu[j];
    EXPECT_EQ(nu.eta1, s.nu[j].eta1);
    EXPECT_EQ(nu.eta2, s.nu[j].eta2);
    const auto se = m.lik_to_sigma_eps[j] + m.iter_to_sigma_eps[j];
    EXPECT_EQ(se.eta1, s.sigma_eps[j].eta1);
    EXPECT_EQ(se.eta2, s.sigma_eps[j].eta2);
    const auto ae = m.iter_to_a_eps[j] + m.prior_to_a_eps[j];
    EXPECT_EQ(ae.eta2, s.a_eps[j].eta2);
    const auto sm = m.pen_to_sigma_mu[j] + m.iter_to_sigma_mu[j];
    EXPECT_EQ(sm.eta2, s.sigma_mu[j].eta2);
    for (int l = 0; l < raw.dims.L; ++l) {
      const auto sp = m.pen_to_sigma_psi[j][l] + m.iter_to_sigma_psi[j][l];
      EXPECT_EQ(sp.eta1, s.sigma_psi[j][l].eta1);
      EXPECT_EQ(sp.eta2, s.sigma_psi[j][l].eta2);
      const auto ap = m.iter_to_a_psi[j][l] + m.prior_to_a_psi[j][l];
      EXPECT_EQ(ap.eta2, s.a_psi[j][l].eta2);
    }
  }
  for (std::size_t i = 0; i < raw.dims.n; ++i) {
    const auto z = m.prior_to_zeta[i] + m.lik_to_zeta[i];
    EXPECT_EQ(z.eta1, s.zeta[i].eta1);
    EXPECT_EQ(z.eta2, s.zeta[i].eta2);
  }
}

TEST(Fit, EnginesAgree) {
  const auto [data, truth] = generate_dataset(desk_scenario(3));
  Hyperparameters h;
  h.L = 2;
  const auto a = align_signs(orthonormalize(fit(data, h, Engine::mfvb), 200));
  const auto b = align_signs(orthonormalize(fit(data, h, Engine::vmp), 200));
  const double scale = a.scores.cwiseAbs().maxCoeff();
  EXPECT_LT((a.scores - b.scores).cwiseAbs().maxCoeff() / scale, 1e-4);
  const double fscale = a.eigenfunctions.cwiseAbs().maxCoeff();
  EXPECT_LT((a.eigenfunctions - b.eigenfunctions).cwiseAbs().maxCoeff() / fscale, 1e-4);
}

TEST(Fit, NoiselessMeanCurve) {
  SimulationScenario s = testkit::small_scenario(12, 20, 1);
  const auto [noisy, truth] = generate_dataset(s);
  std::vector<std::vector<Series>> series(noisy.n(), std::vector<Series>(1));
  for (std::size_t i = 0; i < noisy.n(); ++i) {
    series[i][0].times = noisy.series(i, 0).times;
    series[i][0].values = series[i][0].times.unaryExpr([&](double t) { return truth.mean(0, t); });
  }
  const FunctionalDataset data(noisy.subject_ids(), noisy.variable_names(), series);
  Hyperparameters h;
  h.L = 1;
  h.K = {15};
  const auto raw = fit(data, h, Engine::mfvb);
  const auto designs = build_designs(data, raw.bases);
  const Eigen::VectorXd mu = raw.cache.V_mean[0].col(0);
  double worst = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    worst = std::max(worst, (designs[0][i].C * mu - data.series(i, 0).values).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-3);
  // the superfluous component is shrunk: E(sigma_psi^2)^-1 far above E(sigma_mu^2)^-1
  EXPECT_GT(raw.cache.sigma_psi[0][0].recip, 1e3 * raw.cache.sigma_mu[0].recip);
}

TEST(Fit, NonConvergenceIsFlagged) {
  const auto [data, truth] = generate_dataset(testkit::small_scenario(10));
  Hyperparameters h;
  h.max_iter = 2;
  const auto raw = fit(data, h, Engine::mfvb);
  EXPECT_FALSE(raw.converged);
  EXPECT_EQ(raw.iterations, 2);
}

TEST(Fit, PerVariableSplineCounts) {
  const auto [data, truth] = generate_dataset(testkit::small_scenario(11));
  Hyperparameters h;
  h.K = {6, 9};
  const auto raw = fit(data, h, Engine::mfvb);
  EXPECT_EQ(raw.dims.coef_dim(0), 8);
  EXPECT_EQ(raw.dims.coef_dim(1), 11);
  h.K = {6, 9, 7};
  EXPECT_THROW(fit(data, h, Engine::mfvb), ConfigError);
}
