#pragma once

#include <Eigen/Dense>

namespace bmfpca {

// ---- vec / vech / duplication ----------------------------------------------

// Column stacking.
Eigen::VectorXd vec(const Eigen::MatrixXd& a);
// Inverse of vec for a d x d matrix; throws ShapeError unless size = d^2.
Eigen::MatrixXd vec_inv(const Eigen::VectorXd& a, int d);
// Column stacking of the on-and-below-diagonal entries of a square matrix.
Eigen::VectorXd vech(const Eigen::MatrixXd& a);
// Symmetric matrix whose vech is a.
Eigen::MatrixXd vech_inv(const Eigen::VectorXd& a, int d);

// D_d with D_d vech(A) = vec(A) for symmetric A.
Eigen::MatrixXd duplication(int d);
// Moore-Penrose inverse (D^T D)^{-1} D^T.
Eigen::MatrixXd duplication_pinv(int d);

// ---- Gaussian --------------------------------------------------------------

enum class GaussianForm { vec, vech };

// Natural parameters of N(m, S): eta1 = S^{-1} m and eta2 = -1/2 vec(S^{-1})
// (vec form) or -1/2 D^T vec(S^{-1}) (vech form).
struct GaussianNatural {
  Eigen::VectorXd eta1;
  Eigen::VectorXd eta2;
  GaussianForm form = GaussianForm::vec;

  int dim() const { return static_cast<int>(eta1.size()); }

  static GaussianNatural zero(int d, GaussianForm form);
  GaussianNatural& operator+=(const GaussianNatural& other);
  friend GaussianNatural operator+(GaussianNatural a, const GaussianNatural& b) {
    a += b;
    return a;
  }
};

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

GaussianNatural gauss_to_natural(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                 GaussianForm form = GaussianForm::vec);

// Builds the natural vector directly from a precision matrix P and the linear
// term h (eta1 = h, eta2 from P).
GaussianNatural gauss_natural_from_precision(const Eigen::VectorXd& h,
                                             const Eigen::MatrixXd& precision,
                                             GaussianForm form);

// -2 unvec(eta2), or -2 unvec(D^{+T} eta2) in vech form.
Eigen::MatrixXd precision_of(const GaussianNatural& eta);

// Inverse map. The precision is factorised with LLT; on failure a ridge of
// 1e-10 * trace / d is added once (and logged). Throws NumericalError with
// the smallest eigenvalue if the precision is still not positive definite.
GaussianMoments gauss_from_natural(const GaussianNatural& eta);

// Log-determinant of the covariance, reusing the same factorisation rules.
double gauss_log_det_cov(const GaussianNatural& eta);

// ---- Inverse chi-squared ---------------------------------------------------

// Natural parameters on sufficient statistics (log x, 1/x):
// eta = (-(xi + 2) / 2, -lambda / 2).
struct InvChiSqNatural {
  double eta1 = 0.0;
  double eta2 = 0.0;

  InvChiSqNatural& operator+=(const InvChiSqNatural& other) {
    eta1 += other.eta1;
    eta2 += other.eta2;
    return *this;
  }
  friend InvChiSqNatural operator+(InvChiSqNatural a, const InvChiSqNatural& b) {
    a += b;
    return a;
  }
  bool proper() const { return eta1 < -1.0 && eta2 < 0.0; }
};

struct InvChiSqParams {
  double shape = 0.0;  // xi
  double scale = 0.0;  // lambda
};

InvChiSqNatural invchisq_to_natural(double shape, double scale);
InvChiSqParams invchisq_from_natural(const InvChiSqNatural& eta);
// E(1/x) = (eta1 + 1) / eta2 = xi / lambda.
double invchisq_mean_reciprocal(const InvChiSqNatural& eta);
// E(log x) = log(lambda / 2) - digamma(xi / 2).
double invchisq_mean_log(const InvChiSqNatural& eta);
// Differential entropy -E log q(x).
double invchisq_entropy(const InvChiSqNatural& eta);
// log of the normalising constant (lambda/2)^{xi/2} / Gamma(xi/2).
double invchisq_log_normalizer(double shape, double scale);

}  // namespace bmfpca
