#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "bmfpca/errors.hpp"
#include "bmfpca/expfam.hpp"
#include "support.hpp"

using namespace bmfpca;

TEST(VecVech, WorkedExample) {
  Eigen::MatrixXd A(2, 2);
  A << 2, -1, -3, 1;
  EXPECT_EQ(vec(A), (Eigen::VectorXd(4) << 2, -3, -1, 1).finished());
  EXPECT_EQ(vech(A), (Eigen::VectorXd(3) << 2, -3, 1).finished());
}

TEST(VecVech, Identity) {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_EQ(vec(I), (Eigen::VectorXd(4) << 1, 0, 0, 1).finished());
  EXPECT_EQ(vech(I), (Eigen::VectorXd(3) << 1, 0, 1).finished());
}

TEST(VecVech, RoundTrips) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd A = testkit::random_vector(16, rng).reshaped(4, 4);
  EXPECT_EQ(vec_inv(vec(A), 4), A);
  const Eigen::MatrixXd S = testkit::random_spd(4, rng);
  EXPECT_EQ(vech_inv(vech(S), 4), S);
  EXPECT_THROW(vec_inv(Eigen::VectorXd::Zero(5), 2), ShapeError);
  EXPECT_THROW(vech_inv(Eigen::VectorXd::Zero(4), 2), ShapeError);
}

TEST(Duplication, SmallCases) {
  EXPECT_EQ(duplication(1), Eigen::MatrixXd::Ones(1, 1));
  const Eigen::Vector3d abc(1.5, -2.0, 7.0);
  const Eigen::VectorXd out = duplication(2) * abc;
  EXPECT_EQ(out, (Eigen::VectorXd(4) << 1.5, -2.0, -2.0, 7.0).finished());
}

TEST(Duplication, IdentitiesOnRandomSymmetric) {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd B = testkit::random_vector(25, rng).reshaped(5, 5);
  const Eigen::MatrixXd A = B + B.transpose();
  const Eigen::MatrixXd D = duplication(5);
  const Eigen::MatrixXd Dp = duplication_pinv(5);
  EXPECT_LT((D * vech(A) - vec(A)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((Dp * vec(A) - vech(A)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((Dp * D - Eigen::MatrixXd::Identity(15, 15)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Gaussian, StandardNormal) {
  const auto eta = gauss_to_natural(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  EXPECT_DOUBLE_EQ(eta.eta1[0], 0.0);
  EXPECT_DOUBLE_EQ(eta.eta2[0], -0.5);
  const auto m = gauss_from_natural(eta);
  EXPECT_DOUBLE_EQ(m.mean[0], 0.0);
  EXPECT_DOUBLE_EQ(m.cov(0, 0), 1.0);
}

TEST(Gaussian, HandInversion) {
  const Eigen::Vector2d mean(2, 4);
  const Eigen::MatrixXd cov = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  const auto eta = gauss_to_natural(mean, cov, GaussianForm::vec);
  EXPECT_LT((eta.eta1 - Eigen::Vector2d(1, 2)).norm(), 1e-15);
  EXPECT_LT((eta.eta2 - Eigen::Vector4d(-0.25, 0, 0, -0.25)).norm(), 1e-15);
}

TEST(Gaussian, RandomRoundTripBothForms) {
  std::mt19937_64 rng(11);
  const Eigen::MatrixXd cov = testkit::random_spd(6, rng);
  const Eigen::VectorXd mean = testkit::random_vector(6, rng);
  for (auto form : {GaussianForm::vec, GaussianForm::vech}) {
    const auto eta = gauss_to_natural(mean, cov, form);
    EXPECT_EQ(eta.eta2.size(), form == GaussianForm::vec ? 36 : 21);
    const auto back = gauss_from_natural(eta);
    EXPECT_LT((back.mean - mean).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((back.cov - cov).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((precision_of(eta) - cov.inverse()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(gauss_log_det_cov(eta), std::log(cov.determinant()), 1e-10);
  }
}

TEST(Gaussian, VechOffDiagonalConvention) {
  // vech form keeps -1/2 D^T vec(P): off-diagonal entries carry -P_ij.
  Eigen::MatrixXd P(2, 2);
  P << 2, 0.5, 0.5, 3;
  const auto eta = gauss_natural_from_precision(Eigen::Vector2d::Zero(), P, GaussianForm::vech);
  EXPECT_DOUBLE_EQ(eta.eta2[0], -1.0);
  EXPECT_DOUBLE_EQ(eta.eta2[1], -0.5);
  EXPECT_DOUBLE_EQ(eta.eta2[2], -1.5);
  EXPECT_LT((precision_of(eta) - P).norm(), 1e-15);
}

TEST(Gaussian, IndefinitePrecisionThrows) {
  Eigen::MatrixXd P(2, 2);
  P << 1, 0, 0, -1;
  const auto eta = gauss_natural_from_precision(Eigen::Vector2d::Zero(), P, GaussianForm::vec);
  EXPECT_THROW(gauss_from_natural(eta), NumericalError);
}

TEST(Gaussian, AdditionIsNaturalSum) {
  auto a = gauss_to_natural(Eigen::Vector2d(1, 0), Eigen::MatrixXd::Identity(2, 2));
  const auto b = gauss_to_natural(Eigen::Vector2d(0, 1), Eigen::MatrixXd::Identity(2, 2));
  const auto c = a + b;
  EXPECT_EQ(c.eta1, a.eta1 + b.eta1);
  EXPECT_EQ(c.eta2, a.eta2 + b.eta2);
}

TEST(InvChiSq, NaturalRoundTrip) {
  const auto eta = invchisq_to_natural(3.0, 4.0);
  EXPECT_DOUBLE_EQ(eta.eta1, -2.5);
  EXPECT_DOUBLE_EQ(eta.eta2, -2.0);
  const auto back = invchisq_from_natural(eta);
  EXPECT_DOUBLE_EQ(back.shape, 3.0);
  EXPECT_DOUBLE_EQ(back.scale, 4.0);
  EXPECT_DOUBLE_EQ(invchisq_mean_reciprocal(eta), 0.75);
  EXPECT_THROW(invchisq_to_natural(-1.0, 1.0), DomainError);
  EXPECT_THROW(invchisq_to_natural(1.0, 0.0), DomainError);
}

TEST(InvChiSq, MonteCarloMoments) {
  // x = lambda / chi^2_xi
  const double xi = 7.0, lambda = 2.0;
  std::mt19937_64 rng(17);
  std::chi_squared_distribution<double> chi(xi);
  const int n = 1000000;
  double s1 = 0, s2 = 0, l1 = 0, l2 = 0;
  for (int k = 0; k < n; ++k) {
    const double x = lambda / chi(rng);
    s1 += 1 / x;
    s2 += 1 / (x * x);
    l1 += std::log(x);
    l2 += std::log(x) * std::log(x);
  }
  const double m = s1 / n, se = std::sqrt((s2 / n - m * m) / n);
  const double ml = l1 / n, sel = std::sqrt((l2 / n - ml * ml) / n);
  const auto eta = invchisq_to_natural(xi, lambda);
  EXPECT_NEAR(invchisq_mean_reciprocal(eta), 3.5, 1e-15);
  EXPECT_NEAR(m, 3.5, 3 * se);
  EXPECT_NEAR(ml, invchisq_mean_log(eta), 3 * sel);
}

TEST(InvChiSq, EntropyAgainstQuadrature) {
  const double xi = 5.0, lambda = 3.0;
  const auto eta = invchisq_to_natural(xi, lambda);
  const double logc = invchisq_log_normalizer(xi, lambda);
  auto logpdf = [&](double x) { return logc - (xi / 2 + 1) * std::log(x) - lambda / (2 * x); };
  // integrate over u = log x
  auto integrand = [&](double u) {
    const double x = std::exp(u);
    const double lp = logpdf(x);
    return -std::exp(lp) * lp * x;
  };
  const double h = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, -20.0, 20.0, 15, 1e-13);
  EXPECT_NEAR(invchisq_entropy(eta), h, 1e-9);
  auto density = [&](double u) { return std::exp(logpdf(std::exp(u)) + u); };
  const double total = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      density, -20.0, 20.0, 15, 1e-13);
  EXPECT_NEAR(total, 1.0, 1e-10);
}
