#include "bmfpca/expfam.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <spdlog/spdlog.h>

#include "bmfpca/errors.hpp"

namespace bmfpca {

Eigen::VectorXd vec(const Eigen::MatrixXd& a) {
  return Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
}

Eigen::MatrixXd vec_inv(const Eigen::VectorXd& a, int d) {
  if (d < 0 || a.size() != static_cast<Eigen::Index>(d) * d) {
    throw ShapeError("vec_inv: vector of length " + std::to_string(a.size()) +
                     " cannot form a " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
  }
  return Eigen::Map<const Eigen::MatrixXd>(a.data(), d, d);
}

Eigen::VectorXd vech(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw ShapeError("vech: matrix is not square");
  const Eigen::Index d = a.rows();
  Eigen::VectorXd out(d * (d + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index c = 0; c < d; ++c) {
    for (Eigen::Index r = c; r < d; ++r) out[k++] = a(r, c);
  }
  return out;
}

Eigen::MatrixXd vech_inv(const Eigen::VectorXd& a, int d) {
  if (a.size() != static_cast<Eigen::Index>(d) * (d + 1) / 2) {
    throw ShapeError("vech_inv: length does not match dimension");
  }
  Eigen::MatrixXd out(d, d);
  Eigen::Index k = 0;
  for (int c = 0; c < d; ++c) {
    for (int r = c; r < d; ++r) {
      out(r, c) = a[k];
      out(c, r) = a[k];
      ++k;
    }
  }
  return out;
}

Eigen::MatrixXd duplication(int d) {
  Eigen::MatrixXd dup = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d) * d, d * (d + 1) / 2);
  Eigen::Index k = 0;
  for (int c = 0; c < d; ++c) {
    for (int r = c; r < d; ++r) {
      dup(static_cast<Eigen::Index>(c) * d + r, k) = 1.0;
      dup(static_cast<Eigen::Index>(r) * d + c, k) = 1.0;
      ++k;
    }
  }
  return dup;
}

Eigen::MatrixXd duplication_pinv(int d) {
  const Eigen::MatrixXd dup = duplication(d);
  return (dup.transpose() * dup).ldlt().solve(dup.transpose());
}

GaussianNatural GaussianNatural::zero(int d, GaussianForm form) {
  GaussianNatural eta;
  eta.form = form;
  eta.eta1 = Eigen::VectorXd::Zero(d);
  eta.eta2 = Eigen::VectorXd::Zero(form == GaussianForm::vec ? d * d : d * (d + 1) / 2);
  return eta;
}

GaussianNatural& GaussianNatural::operator+=(const GaussianNatural& other) {
  if (form != other.form || eta1.size() != other.eta1.size() || eta2.size() != other.eta2.size()) {
    throw ShapeError("adding Gaussian natural vectors of different shape");
  }
  eta1 += other.eta1;
  eta2 += other.eta2;
  return *this;
}

GaussianNatural gauss_natural_from_precision(const Eigen::VectorXd& h,
                                             const Eigen::MatrixXd& precision,
                                             GaussianForm form) {
  if (precision.rows() != h.size() || precision.cols() != h.size()) {
    throw ShapeError("precision and linear term dimensions differ");
  }
  GaussianNatural eta;
  eta.form = form;
  eta.eta1 = h;
  if (form == GaussianForm::vec) {
    eta.eta2 = -0.5 * vec(precision);
  } else {
    // D^T vec(P) doubles the strictly-lower entries.
    Eigen::VectorXd v = vech(precision);
    const Eigen::Index d = precision.rows();
    Eigen::Index k = 0;
    for (Eigen::Index c = 0; c < d; ++c) {
      for (Eigen::Index r = c; r < d; ++r) {
        if (r != c) v[k] = precision(r, c) + precision(c, r);
        ++k;
      }
    }
    eta.eta2 = -0.5 * v;
  }
  return eta;
}

GaussianNatural gauss_to_natural(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                 GaussianForm form) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw ShapeError("gauss_to_natural: mean and covariance dimensions differ");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("gauss_to_natural: covariance is not positive definite");
  }
  const Eigen::MatrixXd precision =
      llt.solve(Eigen::MatrixXd::Identity(mean.size(), mean.size()));
  return gauss_natural_from_precision(precision * mean, 0.5 * (precision + precision.transpose()),
                                      form);
}

Eigen::MatrixXd precision_of(const GaussianNatural& eta) {
  const int d = eta.dim();
  if (eta.form == GaussianForm::vec) {
    Eigen::MatrixXd p = -2.0 * vec_inv(eta.eta2, d);
    return 0.5 * (p + p.transpose());
  }
  if (eta.eta2.size() != static_cast<Eigen::Index>(d) * (d + 1) / 2) {
    throw ShapeError("vech natural parameter has wrong length");
  }
  // D^{+T} eta2 halves the off-diagonal entries.
  Eigen::MatrixXd p(d, d);
  Eigen::Index k = 0;
  for (int c = 0; c < d; ++c) {
    for (int r = c; r < d; ++r) {
      const double v = (r == c) ? eta.eta2[k] : 0.5 * eta.eta2[k];
      p(r, c) = -2.0 * v;
      p(c, r) = -2.0 * v;
      ++k;
    }
  }
  return p;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> factorize_precision(const Eigen::MatrixXd& precision) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() == Eigen::Success) return llt;

  const double d = static_cast<double>(precision.rows());
  const double ridge = 1e-10 * std::abs(precision.trace()) / std::max(d, 1.0);
  spdlog::warn("precision matrix of dimension {} not positive definite; adding ridge {:.3g}",
               precision.rows(), ridge);
  Eigen::MatrixXd ridged = precision;
  ridged.diagonal().array() += ridge;
  llt.compute(ridged);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(precision, Eigen::EigenvaluesOnly);
    std::ostringstream msg;
    msg << "precision matrix of dimension " << precision.rows()
        << " is not positive definite (eigenvalue range [" << eig.eigenvalues().minCoeff() << ", "
        << eig.eigenvalues().maxCoeff() << "])";
    throw NumericalError(msg.str());
  }
  return llt;
}

}  // namespace

GaussianMoments gauss_from_natural(const GaussianNatural& eta) {
  const Eigen::MatrixXd precision = precision_of(eta);
  const auto llt = factorize_precision(precision);
  GaussianMoments m;
  m.cov = llt.solve(Eigen::MatrixXd::Identity(eta.dim(), eta.dim()));
  m.cov = 0.5 * (m.cov + m.cov.transpose());
  m.mean = llt.solve(eta.eta1);
  return m;
}

double gauss_log_det_cov(const GaussianNatural& eta) {
  const auto llt = factorize_precision(precision_of(eta));
  return -2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

InvChiSqNatural invchisq_to_natural(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw DomainError("inverse chi-squared needs shape > 0 and scale > 0");
  }
  return {-0.5 * (shape + 2.0), -0.5 * scale};
}

InvChiSqParams invchisq_from_natural(const InvChiSqNatural& eta) {
  if (!eta.proper()) {
    throw DomainError("improper inverse chi-squared natural parameters (" +
                      std::to_string(eta.eta1) + ", " + std::to_string(eta.eta2) + ")");
  }
  return {-2.0 * eta.eta1 - 2.0, -2.0 * eta.eta2};
}

double invchisq_mean_reciprocal(const InvChiSqNatural& eta) {
  if (!eta.proper()) throw DomainError("improper inverse chi-squared natural parameters");
  return (eta.eta1 + 1.0) / eta.eta2;
}

double invchisq_mean_log(const InvChiSqNatural& eta) {
  const InvChiSqParams q = invchisq_from_natural(eta);
  return std::log(0.5 * q.scale) - boost::math::digamma(0.5 * q.shape);
}

double invchisq_log_normalizer(double shape, double scale) {
  return 0.5 * shape * std::log(0.5 * scale) - std::lgamma(0.5 * shape);
}

double invchisq_entropy(const InvChiSqNatural& eta) {
  const InvChiSqParams q = invchisq_from_natural(eta);
  // -E log q = -log c + (xi+2)/2 E(log x) + lambda/2 E(1/x)
  return -invchisq_log_normalizer(q.shape, q.scale) +
         0.5 * (q.shape + 2.0) * invchisq_mean_log(eta) + 0.5 * q.scale * (q.shape / q.scale);
}

}  // namespace bmfpca
