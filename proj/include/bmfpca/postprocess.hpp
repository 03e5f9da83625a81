#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bmfpca/engines.hpp"
#include "bmfpca/splines.hpp"

namespace bmfpca {

// Trapezoid weights on an equidistant grid of the given size.
Eigen::VectorXd trapezoid_weights(int n_g);

// Sum over variables of the trapezoid approximation of int_0^1 f^(j) g^(j),
// for stacked vectors of length p * n_g on the equidistant n_g grid.
double h_inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g, int n_g);
double h_norm(const Eigen::VectorXd& f, int n_g);

struct OrthonormalizedFit {
  Eigen::VectorXd times;              // the equidistant grid
  std::vector<Eigen::VectorXd> mean;  // per variable, on the grid
  Eigen::MatrixXd eigenfunctions;     // (p * n_g) x L, variable-major blocks
  Eigen::MatrixXd scores;             // n x L
  Eigen::VectorXd eigenvalues;        // empirical score variances, descending
  std::vector<Eigen::MatrixXd> score_cov;  // per subject, L x L
  // Linear map taking E_q(zeta_i) to the orthonormalised scores: row i of
  // `scores` equals E_q(zeta_i)^T transport.
  Eigen::MatrixXd transport;
  std::vector<bool> near_zero;  // eigenvalue <= 1e-12
  Engine engine = Engine::mfvb;

  int grid_size() const { return static_cast<int>(times.size()); }
  int num_variables() const { return static_cast<int>(mean.size()); }
  int num_components() const { return static_cast<int>(eigenvalues.size()); }
  // psi_l^{(j)} on the grid.
  Eigen::VectorXd eigenfunction(int l, int j) const {
    return eigenfunctions.col(l).segment(static_cast<Eigen::Index>(j) * grid_size(), grid_size());
  }
  Eigen::VectorXd score_sd(std::size_t i) const { return score_cov[i].diagonal().cwiseSqrt(); }
};

// Raw latent functions of a fit on the grid: column 0 is the stacked mean,
// columns 1..L the unconstrained latent functions.
Eigen::MatrixXd raw_functions_on_grid(const RawFit& raw, int n_g);

// mu + sum_l E(zeta_il) psi_l for every subject, before orthonormalisation:
// (p * n_g) x n.
Eigen::MatrixXd raw_trajectories(const RawFit& raw, int n_g);
// mu + sum_l zeta^_il psi^_l for every subject: (p * n_g) x n.
Eigen::MatrixXd fitted_trajectories(const OrthonormalizedFit& fit);

// SVD of the latent functions under the trapezoid inner product, spectral
// decomposition of the score covariance, unit-norm eigenfunctions, rescaled
// scores, transported score covariances and sign alignment.
OrthonormalizedFit orthonormalize(const RawFit& raw, int n_g = kDefaultGridSize);

// Makes the largest-magnitude entry of each eigenfunction positive (earliest
// index on ties), flipping the matching scores and transport column.
OrthonormalizedFit align_signs(OrthonormalizedFit fit);

// lambda_l / sum lambda. Throws DomainError when every eigenvalue is zero.
Eigen::VectorXd pve(const Eigen::VectorXd& eigenvalues);
inline Eigen::VectorXd pve(const OrthonormalizedFit& fit) { return pve(fit.eigenvalues); }

struct Trajectory {
  Eigen::VectorXd times;
  Eigen::VectorXd estimate;
  Eigen::VectorXd lower;  // 2.5% pointwise
  Eigen::VectorXd upper;  // 97.5% pointwise
};

inline constexpr int kPredictionSamples = 1000;

// Per-variable trajectory for subject i at the given times with 95% pointwise
// bands from S joint draws of (nu, zeta_i) under q. The random stream is
// derived from (seed, i).
std::vector<Trajectory> predict_trajectory(const VariationalState& state,
                                           const std::vector<SplineBasis>& bases,
                                           std::size_t i, const Eigen::VectorXd& times,
                                           std::uint64_t seed, int samples = kPredictionSamples);

}  // namespace bmfpca
