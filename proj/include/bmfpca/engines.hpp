#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bmfpca/dataset.hpp"
#include "bmfpca/expfam.hpp"
#include "bmfpca/model.hpp"
#include "bmfpca/splines.hpp"

namespace bmfpca {

enum class Engine { mfvb, vmp };

std::string to_string(Engine engine);
// Accepts "mfvb" or "vmp"; throws ConfigError otherwise.
Engine parse_engine(const std::string& name);

// Messages stored on the edges of the factor graph by the VMP engine. Each
// q-density's natural vector is the sum of the messages into its node.
struct VmpMessages {
  std::vector<GaussianNatural> lik_to_nu, pen_to_nu;        // per j
  std::vector<GaussianNatural> lik_to_zeta, prior_to_zeta;  // per i
  // per j: likelihood / iterated factors into sigma_eps, iterated / prior into a_eps
  std::vector<InvChiSqNatural> lik_to_sigma_eps, iter_to_sigma_eps, iter_to_a_eps,
      prior_to_a_eps;
  std::vector<InvChiSqNatural> pen_to_sigma_mu, iter_to_sigma_mu, iter_to_a_mu, prior_to_a_mu;
  std::vector<std::vector<InvChiSqNatural>> pen_to_sigma_psi, iter_to_sigma_psi, iter_to_a_psi,
      prior_to_a_psi;  // [j][l]
};

struct RawFit {
  Engine engine = Engine::mfvb;
  VariationalState state;
  MomentCache cache;
  std::vector<double> elbo_trace;
  bool converged = false;
  int iterations = 0;
  std::string dataset_fingerprint;
  std::vector<SplineBasis> bases;
  ModelDims dims;
  Hyperparameters hyper;
  std::optional<VmpMessages> messages;  // VMP only
};

// ---- conjugate kernels shared by both engines ------------------------------

// Penalisation factor to nu^{(j)}: zero linear term, precision
// blockdiag over [mu, psi_1..psi_L] of diag(sigma_beta^-2 I_2, E(1/sigma^2) I_K).
GaussianNatural penalization_to_nu(const MomentCache& cache, const ModelDims& dims,
                                   const Hyperparameters& hyper, std::size_t j);
// Penalisation factor to sigma^2 of block b of nu^{(j)}: (-K/2, -E||u_b||^2 / 2).
InvChiSqNatural penalization_to_sigma(const MomentCache& cache, const ModelDims& dims,
                                      std::size_t j, int block);
// Iterated inverse-chi^2 factor sigma^2 | a ~ Inverse-chi^2(1, 1/a).
InvChiSqNatural iterated_to_sigma(const ScaleMoments& a);
InvChiSqNatural iterated_to_a(const ScaleMoments& sigma);

// ---- ELBO ------------------------------------------------------------------

double gaussian_entropy(const Eigen::MatrixXd& cov);
// E log p(sigma^2 | a) for sigma^2 | a ~ Inverse-chi^2(1, 1/a).
double expected_log_sigma_given_a(const ScaleMoments& sigma, const ScaleMoments& a);
// E log p(a) for a ~ Inverse-chi^2(1, 1/A^2).
double expected_log_a_prior(const ScaleMoments& a, double A);

// E_q log p(x, theta) - E_q log q(theta), all constants included.
double elbo(const VariationalState& state, const MomentCache& cache, const Designs& designs,
            const ModelDims& dims, const Hyperparameters& hyper);

// ---- drivers ---------------------------------------------------------------

RawFit fit_mfvb(const FunctionalDataset& data, const std::vector<SplineBasis>& bases,
                const Hyperparameters& hyper);
RawFit fit_vmp(const FunctionalDataset& data, const std::vector<SplineBasis>& bases,
               const Hyperparameters& hyper);
RawFit fit(const FunctionalDataset& data, const std::vector<SplineBasis>& bases,
           const Hyperparameters& hyper, Engine engine);
// Builds the bases from hyper.K and fits.
RawFit fit(const FunctionalDataset& data, const Hyperparameters& hyper, Engine engine);

}  // namespace bmfpca
