#include "bmfpca/splines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "bmfpca/errors.hpp"

namespace bmfpca {

namespace {

constexpr int kDegree = 3;

// Index of the knot span [u_s, u_{s+1}) containing t; t = 1 maps to the last
// non-degenerate span.
int find_span(const std::vector<double>& knots, int num_basis, double t) {
  if (t >= knots[static_cast<std::size_t>(num_basis)]) return num_basis - 1;
  auto it = std::upper_bound(knots.begin(), knots.end(), t);
  return static_cast<int>(it - knots.begin()) - 1;
}

// Three-point Gauss-Legendre rule on [-1,1]; exact to degree 5.
constexpr std::array<double, 3> kGaussNodes = {-0.77459666924148337704, 0.0,
                                               0.77459666924148337704};
constexpr std::array<double, 3> kGaussWeights = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

}  // namespace

BsplineDerivatives cubic_bspline_derivatives(const std::vector<double>& knots, double t) {
  const int num_basis = static_cast<int>(knots.size()) - kDegree - 1;
  const int span = find_span(knots, num_basis, t);
  const int p = kDegree;

  // Derivative table of the p+1 non-zero functions on the span.
  double ndu[p + 1][p + 1];
  double left[p + 1];
  double right[p + 1];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - knots[static_cast<std::size_t>(span + 1 - j)];
    right[j] = knots[static_cast<std::size_t>(span + j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }

  constexpr int kOrder = 2;
  double ders[kOrder + 1][p + 1];
  for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];
  double a[2][p + 1];
  for (int r = 0; r <= p; ++r) {
    int s1 = 0;
    int s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= kOrder; ++k) {
      double d = 0.0;
      const int rk = r - k;
      const int pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= kOrder; ++k) {
    for (int j = 0; j <= p; ++j) ders[k][j] *= factor;
    factor *= (p - k);
  }

  BsplineDerivatives out{Eigen::VectorXd::Zero(num_basis), Eigen::VectorXd::Zero(num_basis),
                         Eigen::VectorXd::Zero(num_basis)};
  for (int j = 0; j <= p; ++j) {
    const int index = span - p + j;
    out.value[index] = ders[0][j];
    out.first[index] = ders[1][j];
    out.second[index] = ders[2][j];
  }
  return out;
}

SplineBasis SplineBasis::build(int num_splines) {
  if (num_splines < kMinSplines) {
    throw ConfigError("number of splines K = " + std::to_string(num_splines) +
                      " is below the minimum of " + std::to_string(kMinSplines));
  }
  SplineBasis basis;
  basis.num_splines_ = num_splines;
  const int num_interior = num_splines - 2;
  for (int k = 1; k <= num_interior; ++k) {
    basis.interior_knots_.push_back(static_cast<double>(k) / (num_interior + 1));
  }
  basis.knots_.assign(kDegree + 1, 0.0);
  basis.knots_.insert(basis.knots_.end(), basis.interior_knots_.begin(),
                      basis.interior_knots_.end());
  basis.knots_.insert(basis.knots_.end(), kDegree + 1, 1.0);
  const int num_basis = num_splines + 2;

  // Exact integrals over each knot interval: penalty, int B and int t B.
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(num_basis, num_basis);
  Eigen::VectorXd int_b = Eigen::VectorXd::Zero(num_basis);
  Eigen::VectorXd int_tb = Eigen::VectorXd::Zero(num_basis);
  std::vector<double> breaks = {0.0};
  breaks.insert(breaks.end(), basis.interior_knots_.begin(), basis.interior_knots_.end());
  breaks.push_back(1.0);
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double lo = breaks[s];
    const double hi = breaks[s + 1];
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    for (std::size_t g = 0; g < kGaussNodes.size(); ++g) {
      const double t = mid + half * kGaussNodes[g];
      const double w = half * kGaussWeights[g];
      const BsplineDerivatives d = cubic_bspline_derivatives(basis.knots_, t);
      omega.noalias() += w * d.second * d.second.transpose();
      int_b += w * d.value;
      int_tb += (w * t) * d.value;
    }
  }
  omega = 0.5 * (omega + omega.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega);
  if (eig.info() != Eigen::Success) throw NumericalError("spline penalty eigendecomposition failed");
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  const double threshold = 1e-10 * values.maxCoeff();
  const int num_null = static_cast<int>((values.array() < threshold).count());
  if (num_null != 2) {
    throw NumericalError("spline penalty has " + std::to_string(num_null) +
                         " null directions, expected 2");
  }

  basis.transform_.resize(num_basis, num_splines);
  basis.eigenvalues_.resize(num_splines);
  for (int k = 0; k < num_splines; ++k) {
    const int source = num_basis - 1 - k;  // descending eigenvalue order
    basis.eigenvalues_[k] = values[source];
    basis.transform_.col(k) = eig.eigenvectors().col(source) / std::sqrt(values[source]);
  }

  // Remove the L2 projection of every z_k onto span{1, t}. Constants and t
  // have B-spline coefficients 1 and the Greville abscissae.
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(num_basis);
  Eigen::VectorXd greville(num_basis);
  for (int a = 0; a < num_basis; ++a) {
    greville[a] = (basis.knots_[static_cast<std::size_t>(a + 1)] +
                   basis.knots_[static_cast<std::size_t>(a + 2)] +
                   basis.knots_[static_cast<std::size_t>(a + 3)]) /
                  3.0;
  }
  Eigen::Matrix2d gram;
  gram << 1.0, 0.5, 0.5, 1.0 / 3.0;
  const Eigen::Matrix2d gram_inv = gram.inverse();
  for (int k = 0; k < num_splines; ++k) {
    const Eigen::Vector2d moments(int_b.dot(basis.transform_.col(k)),
                                  int_tb.dot(basis.transform_.col(k)));
    const Eigen::Vector2d coef = gram_inv * moments;
    basis.transform_.col(k) -= coef[0] * ones + coef[1] * greville;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis.transform_);
  if (qr.rank() != num_splines) throw NumericalError("spline transform is rank deficient");
  return basis;
}

Eigen::VectorXd SplineBasis::bspline_values(double t) const {
  return cubic_bspline_derivatives(knots_, t).value;
}

Eigen::VectorXd SplineBasis::evaluate(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("spline evaluation at t = " + std::to_string(t) + " outside [0,1]");
  }
  return transform_.transpose() * bspline_values(t);
}

Eigen::MatrixXd SplineBasis::design(const Eigen::VectorXd& times) const {
  Eigen::MatrixXd c(times.size(), num_columns());
  for (Eigen::Index r = 0; r < times.size(); ++r) {
    const double t = times[r];
    c(r, 0) = 1.0;
    c(r, 1) = t;
    c.row(r).tail(num_splines_) = evaluate(t).transpose();
  }
  return c;
}

Eigen::VectorXd grid_times(int n_g) {
  if (n_g < 2) throw ConfigError("evaluation grid needs at least 2 points, got " + std::to_string(n_g));
  Eigen::VectorXd t(n_g);
  for (int k = 0; k < n_g; ++k) t[k] = static_cast<double>(k) / (n_g - 1);
  return t;
}

EvaluationGrid evaluation_grid(const SplineBasis& basis, int n_g) {
  EvaluationGrid grid;
  grid.times = grid_times(n_g);
  grid.design = basis.design(grid.times);
  return grid;
}

std::vector<SplineBasis> build_bases(const std::vector<int>& num_splines) {
  std::vector<SplineBasis> bases;
  bases.reserve(num_splines.size());
  for (int k : num_splines) bases.push_back(SplineBasis::build(k));
  return bases;
}

}  // namespace bmfpca
