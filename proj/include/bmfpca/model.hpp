#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmfpca/dataset.hpp"
#include "bmfpca/expfam.hpp"
#include "bmfpca/splines.hpp"

namespace bmfpca {

struct Hyperparameters {
  double sigma_beta = 1e5;
  double A = 1e5;
  int L = 2;
  // One entry per variable, or a single entry applied to every variable.
  std::vector<int> K = {7};
  double tau = 1e-5;
  int max_iter = 500;
  std::uint64_t seed = 1;

  // Throws ConfigError on invalid values.
  void check() const;
  // K_j for variable j.
  int num_splines(std::size_t j) const { return K.size() == 1 ? K[0] : K.at(j); }
};

struct ModelDims {
  std::size_t n = 0;
  std::size_t p = 0;
  int L = 0;
  std::vector<int> K;

  // K_j + 2
  int coef_dim(std::size_t j) const { return K[j] + 2; }
  // (L + 1)(K_j + 2)
  int nu_dim(std::size_t j) const { return (L + 1) * coef_dim(j); }

  static ModelDims from(const FunctionalDataset& data, const Hyperparameters& hyper);
};

// Static per-(i,j) quantities: C, C^T C, C^T x and x^T x.
struct SeriesDesign {
  Eigen::MatrixXd C;
  Eigen::MatrixXd CtC;
  Eigen::VectorXd Ctx;
  double xtx = 0.0;
  int count = 0;
};

// designs[j][i]
using Designs = std::vector<std::vector<SeriesDesign>>;

Designs build_designs(const FunctionalDataset& data, const std::vector<SplineBasis>& bases);

// Natural parameters of every q-density of the mean-field factorisation.
struct VariationalState {
  std::vector<GaussianNatural> nu;    // per j, vec form
  std::vector<GaussianNatural> zeta;  // per i, vech form
  std::vector<InvChiSqNatural> sigma_eps, a_eps, sigma_mu, a_mu;
  std::vector<std::vector<InvChiSqNatural>> sigma_psi, a_psi;  // [j][l]
  std::vector<double> elbo_trace;
  int iteration = 0;
};

// Fixed prior messages of the model.
struct PriorParams {
  GaussianNatural zeta;  // N(0, I_L), vech form
  InvChiSqNatural a;     // Inverse-chi^2(1, 1/A^2)
  double sigma_beta_sq = 0.0;
};

PriorParams prior_natural_params(const Hyperparameters& hyper);

// Pooled ridge fit for the mean, small random latent-function coefficients,
// covariances 0.1 I, inverse-chi^2 factors at (2, 2) and scores at the prior.
VariationalState initialize_state(const FunctionalDataset& data, const Designs& designs,
                                  const ModelDims& dims, const Hyperparameters& hyper);

// Reciprocal and log moments of one inverse-chi^2 factor.
struct ScaleMoments {
  double recip = 0.0;
  double log_mean = 0.0;
};

// Derived expectations under q. Entries are refreshed in place by the engines
// after each block update; refresh_all recomputes everything.
struct MomentCache {
  // per j: E(nu) and Cov(nu); V = [nu_mu, nu_psi_1, ..., nu_psi_L] as a
  // (K_j+2) x (L+1) matrix.
  std::vector<Eigen::VectorXd> nu_mean;
  std::vector<Eigen::MatrixXd> nu_cov;
  std::vector<Eigen::MatrixXd> V_mean;

  // per i
  std::vector<Eigen::VectorXd> zeta_mean;
  std::vector<Eigen::MatrixXd> zeta_cov;
  std::vector<Eigen::VectorXd> zt_mean;    // E(zeta~) = (1, E zeta)
  std::vector<Eigen::MatrixXd> zt_second;  // E(zeta~ zeta~^T)

  // per (j, i): E(H_i^{(j)}) with (a, b) entry E(nu_a^T C^T C nu_b). Its
  // (0,0) entry is E(h_mu), row 0 beyond the first column is E(h_mupsi)^T
  // and the trailing L x L block is E(H_psi).
  std::vector<std::vector<Eigen::MatrixXd>> H;
  // per (j, i): E(V)^T C^T x
  std::vector<std::vector<Eigen::VectorXd>> VtCtx;

  std::vector<ScaleMoments> sigma_eps, a_eps, sigma_mu, a_mu;
  std::vector<std::vector<ScaleMoments>> sigma_psi, a_psi;

  Eigen::VectorXd h_mupsi(std::size_t j, std::size_t i) const;
  Eigen::MatrixXd H_psi(std::size_t j, std::size_t i) const;
  double h_mu(std::size_t j, std::size_t i) const { return H[j][i](0, 0); }
};

MomentCache refresh_moments(const VariationalState& state, const Designs& designs,
                            const ModelDims& dims);

void refresh_nu(MomentCache& cache, const VariationalState& state, const Designs& designs,
                const ModelDims& dims, std::size_t j);
void refresh_zeta(MomentCache& cache, const VariationalState& state, std::size_t i);
void refresh_scales(MomentCache& cache, const VariationalState& state, const ModelDims& dims);

// E||x_i - C_i V zeta~_i||^2 for variable j.
double expected_rss(const MomentCache& cache, const Designs& designs, std::size_t j,
                    std::size_t i);

// E(||u||^2) for the penalised part of block b (0 = mean, l = psi_l) of nu^{(j)}.
double expected_penalized_sq(const MomentCache& cache, const ModelDims& dims, std::size_t j,
                             int block);

}  // namespace bmfpca
