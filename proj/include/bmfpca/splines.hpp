#pragma once

#include <vector>

#include <Eigen/Dense>

namespace bmfpca {

// Smallest K accepted by SplineBasis::build.
inline constexpr int kMinSplines = 5;

// O'Sullivan penalised spline basis in mixed-model form.
//
// Cubic B-splines on [0,1] with K - 2 equally spaced interior knots give K + 2
// functions. Their roughness penalty Omega = int B'' B''^T is diagonalised;
// the two null directions (constants and linear functions) become the
// explicit intercept and slope columns of the design, and the K penalised
// directions are scaled so the penalty on their coefficients is the identity.
// Each z_k is finally shifted by a linear function so that it is
// L2([0,1])-orthogonal to 1 and t; the penalty is unaffected by the shift.
class SplineBasis {
 public:
  static SplineBasis build(int num_splines);

  int num_splines() const { return num_splines_; }
  int num_columns() const { return num_splines_ + 2; }
  const std::vector<double>& interior_knots() const { return interior_knots_; }
  // (K+2) x K map from raw B-spline values to z_1..z_K.
  const Eigen::MatrixXd& transform() const { return transform_; }
  // Penalty eigenvalues kept for z_1..z_K, descending.
  const Eigen::VectorXd& penalty_eigenvalues() const { return eigenvalues_; }

  // Raw cubic B-spline values at t (length K+2).
  Eigen::VectorXd bspline_values(double t) const;
  // z_1(t), ..., z_K(t).
  Eigen::VectorXd evaluate(double t) const;

  // Rows [1, t, z_1(t), ..., z_K(t)]. Throws DomainError for t outside [0,1].
  Eigen::MatrixXd design(const Eigen::VectorXd& times) const;

 private:
  SplineBasis() = default;

  int num_splines_ = 0;
  std::vector<double> interior_knots_;
  std::vector<double> knots_;  // full clamped knot vector
  Eigen::MatrixXd transform_;
  Eigen::VectorXd eigenvalues_;
};

// Values and first two derivatives of the cubic B-splines on a clamped knot
// vector. Exposed for tests.
struct BsplineDerivatives {
  Eigen::VectorXd value;
  Eigen::VectorXd first;
  Eigen::VectorXd second;
};
BsplineDerivatives cubic_bspline_derivatives(const std::vector<double>& knots, double t);

// Equidistant grid t_1 = 0, ..., t_{n_g} = 1. Throws ConfigError for n_g < 2.
Eigen::VectorXd grid_times(int n_g);

// Default grid size for orthonormalisation, norms and exports.
inline constexpr int kDefaultGridSize = 1000;

struct EvaluationGrid {
  Eigen::VectorXd times;
  Eigen::MatrixXd design;

  int size() const { return static_cast<int>(times.size()); }
  double spacing() const { return 1.0 / static_cast<double>(times.size() - 1); }
};

EvaluationGrid evaluation_grid(const SplineBasis& basis, int n_g);

std::vector<SplineBasis> build_bases(const std::vector<int>& num_splines);

}  // namespace bmfpca
