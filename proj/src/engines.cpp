#include "bmfpca/engines.hpp"

#include <cmath>
#include <numbers>

#include <spdlog/spdlog.h>

#include "bmfpca/errors.hpp"
#include "bmfpca/likelihood_fragment.hpp"

namespace bmfpca {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
const double kLogGammaHalf = std::lgamma(0.5);

}  // namespace

std::string to_string(Engine engine) { return engine == Engine::mfvb ? "mfvb" : "vmp"; }

Engine parse_engine(const std::string& name) {
  if (name == "mfvb") return Engine::mfvb;
  if (name == "vmp") return Engine::vmp;
  throw ConfigError("unknown engine '" + name + "' (expected mfvb or vmp)");
}

GaussianNatural penalization_to_nu(const MomentCache& cache, const ModelDims& dims,
                                   const Hyperparameters& hyper, std::size_t j) {
  const int d = dims.coef_dim(j);
  const double beta_prec = 1.0 / (hyper.sigma_beta * hyper.sigma_beta);
  Eigen::VectorXd diag(dims.nu_dim(j));
  for (int b = 0; b <= dims.L; ++b) {
    const double u_prec = b == 0 ? cache.sigma_mu[j].recip : cache.sigma_psi[j][b - 1].recip;
    diag.segment(b * d, 2).setConstant(beta_prec);
    diag.segment(b * d + 2, d - 2).setConstant(u_prec);
  }
  return gauss_natural_from_precision(Eigen::VectorXd::Zero(diag.size()), diag.asDiagonal(),
                                      GaussianForm::vec);
}

InvChiSqNatural penalization_to_sigma(const MomentCache& cache, const ModelDims& dims,
                                      std::size_t j, int block) {
  return {-0.5 * dims.K[j], -0.5 * expected_penalized_sq(cache, dims, j, block)};
}

InvChiSqNatural iterated_to_sigma(const ScaleMoments& a) { return {-1.5, -0.5 * a.recip}; }

InvChiSqNatural iterated_to_a(const ScaleMoments& sigma) { return {-0.5, -0.5 * sigma.recip}; }

double gaussian_entropy(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance is not positive definite");
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return 0.5 * static_cast<double>(cov.rows()) * (1.0 + kLog2Pi) + 0.5 * log_det;
}

double expected_log_sigma_given_a(const ScaleMoments& sigma, const ScaleMoments& a) {
  // log p = 1/2 log(1 / (2a)) - log Gamma(1/2) - 3/2 log sigma^2 - 1 / (2 a sigma^2)
  return -0.5 * std::log(2.0) - 0.5 * a.log_mean - kLogGammaHalf - 1.5 * sigma.log_mean -
         0.5 * a.recip * sigma.recip;
}

double expected_log_a_prior(const ScaleMoments& a, double A) {
  const double scale = 1.0 / (A * A);
  return 0.5 * std::log(0.5 * scale) - kLogGammaHalf - 1.5 * a.log_mean - 0.5 * scale * a.recip;
}

double elbo(const VariationalState& state, const MomentCache& cache, const Designs& designs,
            const ModelDims& dims, const Hyperparameters& hyper) {
  const double sb2 = hyper.sigma_beta * hyper.sigma_beta;
  double total = 0.0;

  for (std::size_t j = 0; j < dims.p; ++j) {
    // likelihood
    const ScaleMoments& eps = cache.sigma_eps[j];
    for (std::size_t i = 0; i < dims.n; ++i) {
      const double n_ij = designs[j][i].count;
      total += -0.5 * n_ij * (kLog2Pi + eps.log_mean) -
               0.5 * eps.recip * expected_rss(cache, designs, j, i);
    }

    // p(nu | sigma^2)
    const int d = dims.coef_dim(j);
    const int K = dims.K[j];
    for (int b = 0; b <= dims.L; ++b) {
      const Eigen::Index start = static_cast<Eigen::Index>(b) * d;
      double beta_sq = 0.0;
      for (int k = 0; k < 2; ++k) {
        beta_sq += cache.nu_mean[j][start + k] * cache.nu_mean[j][start + k] +
                   cache.nu_cov[j](start + k, start + k);
      }
      total += -kLog2Pi - std::log(sb2) - 0.5 * beta_sq / sb2;
      const ScaleMoments& s = b == 0 ? cache.sigma_mu[j] : cache.sigma_psi[j][b - 1];
      total += -0.5 * K * (kLog2Pi + s.log_mean) -
               0.5 * s.recip * expected_penalized_sq(cache, dims, j, b);
    }

    // variance hierarchy and entropies of the scale factors
    total += expected_log_sigma_given_a(cache.sigma_eps[j], cache.a_eps[j]) +
             expected_log_a_prior(cache.a_eps[j], hyper.A);
    total += expected_log_sigma_given_a(cache.sigma_mu[j], cache.a_mu[j]) +
             expected_log_a_prior(cache.a_mu[j], hyper.A);
    total += invchisq_entropy(state.sigma_eps[j]) + invchisq_entropy(state.a_eps[j]) +
             invchisq_entropy(state.sigma_mu[j]) + invchisq_entropy(state.a_mu[j]);
    for (int l = 0; l < dims.L; ++l) {
      total += expected_log_sigma_given_a(cache.sigma_psi[j][l], cache.a_psi[j][l]) +
               expected_log_a_prior(cache.a_psi[j][l], hyper.A);
      total += invchisq_entropy(state.sigma_psi[j][l]) + invchisq_entropy(state.a_psi[j][l]);
    }

    total += gaussian_entropy(cache.nu_cov[j]);
  }

  for (std::size_t i = 0; i < dims.n; ++i) {
    total += -0.5 * dims.L * kLog2Pi -
             0.5 * (cache.zeta_mean[i].squaredNorm() + cache.zeta_cov[i].trace());
    total += gaussian_entropy(cache.zeta_cov[i]);
  }
  return total;
}

namespace {

struct Problem {
  ModelDims dims;
  Designs designs;
  PriorParams prior;
};

Problem setup(const FunctionalDataset& data, const std::vector<SplineBasis>& bases,
              const Hyperparameters& hyper) {
  require_valid(data);
  Problem pb;
  pb.dims = ModelDims::from(data, hyper);
  if (bases.size() != data.p()) throw ConfigError("one spline basis per variable is required");
  for (std::size_t j = 0; j < data.p(); ++j) {
    if (bases[j].num_splines() != pb.dims.K[j]) {
      throw ConfigError("spline basis for variable " + std::to_string(j) +
                        " does not match the requested K");
    }
  }
  pb.designs = build_designs(data, bases);
  pb.prior = prior_natural_params(hyper);
  return pb;
}

// ---- MFVB: closed-form conjugate updates ----

void mfvb_sweep(VariationalState& state, MomentCache& cache, const Problem& pb,
                const Hyperparameters& hyper) {
  const ModelDims& dims = pb.dims;
  const double inv_A2 = 1.0 / (hyper.A * hyper.A);

  for (std::size_t i = 0; i < dims.n; ++i) {
    state.zeta[i] = pb.prior.zeta + message_to_zeta(cache, pb.designs, dims, i);
    refresh_zeta(cache, state, i);
  }
  for (std::size_t j = 0; j < dims.p; ++j) {
    state.nu[j] = message_to_nu(cache, pb.designs, dims, j) +
                  penalization_to_nu(cache, dims, hyper, j);
    refresh_nu(cache, state, pb.designs, dims, j);
  }
  for (std::size_t j = 0; j < dims.p; ++j) {
    double count = 0.0;
    double rss = 0.0;
    for (std::size_t i = 0; i < dims.n; ++i) {
      count += pb.designs[j][i].count;
      rss += expected_rss(cache, pb.designs, j, i);
    }
    state.sigma_eps[j] = invchisq_to_natural(1.0 + count, cache.a_eps[j].recip + rss);
  }
  refresh_scales(cache, state, dims);
  for (std::size_t j = 0; j < dims.p; ++j) {
    const double K = dims.K[j];
    state.sigma_mu[j] = invchisq_to_natural(
        K + 1.0, cache.a_mu[j].recip + expected_penalized_sq(cache, dims, j, 0));
    for (int l = 0; l < dims.L; ++l) {
      state.sigma_psi[j][l] = invchisq_to_natural(
          K + 1.0, cache.a_psi[j][l].recip + expected_penalized_sq(cache, dims, j, l + 1));
    }
  }
  refresh_scales(cache, state, dims);
  for (std::size_t j = 0; j < dims.p; ++j) {
    state.a_eps[j] = invchisq_to_natural(2.0, cache.sigma_eps[j].recip + inv_A2);
    state.a_mu[j] = invchisq_to_natural(2.0, cache.sigma_mu[j].recip + inv_A2);
    for (int l = 0; l < dims.L; ++l) {
      state.a_psi[j][l] = invchisq_to_natural(2.0, cache.sigma_psi[j][l].recip + inv_A2);
    }
  }
  refresh_scales(cache, state, dims);
}

// ---- VMP: messages stored per edge, q = sum of incoming ----

VmpMessages initial_messages(const VariationalState& state, const Problem& pb) {
  // Split the initial q-densities so that the stored messages sum to them:
  // the likelihood side carries q minus the fixed prior contribution.
  const ModelDims& dims = pb.dims;
  VmpMessages m;
  const InvChiSqNatural zero{0.0, 0.0};
  for (std::size_t j = 0; j < dims.p; ++j) {
    m.lik_to_nu.push_back(state.nu[j]);
    m.pen_to_nu.push_back(GaussianNatural::zero(dims.nu_dim(j), GaussianForm::vec));
    m.lik_to_sigma_eps.push_back(state.sigma_eps[j]);
    m.iter_to_sigma_eps.push_back(zero);
    m.iter_to_a_eps.push_back(state.a_eps[j]);
    m.prior_to_a_eps.push_back(zero);
    m.pen_to_sigma_mu.push_back(state.sigma_mu[j]);
    m.iter_to_sigma_mu.push_back(zero);
    m.iter_to_a_mu.push_back(state.a_mu[j]);
    m.prior_to_a_mu.push_back(zero);
    m.pen_to_sigma_psi.push_back(state.sigma_psi[j]);
    m.iter_to_sigma_psi.emplace_back(dims.L, zero);
    m.iter_to_a_psi.push_back(state.a_psi[j]);
    m.prior_to_a_psi.emplace_back(dims.L, zero);
  }
  for (std::size_t i = 0; i < dims.n; ++i) {
    m.prior_to_zeta.push_back(pb.prior.zeta);
    m.lik_to_zeta.push_back(GaussianNatural::zero(dims.L, GaussianForm::vech));
  }
  return m;
}

void vmp_iteration(VariationalState& state, MomentCache& cache, VmpMessages& m,
                   const Problem& pb, const Hyperparameters& hyper) {
  const ModelDims& dims = pb.dims;

  // score nodes
  for (std::size_t i = 0; i < dims.n; ++i) {
    m.lik_to_zeta[i] = message_to_zeta(cache, pb.designs, dims, i);
    m.prior_to_zeta[i] = pb.prior.zeta;
    state.zeta[i] = m.prior_to_zeta[i] + m.lik_to_zeta[i];
    refresh_zeta(cache, state, i);
  }
  // coefficient nodes
  for (std::size_t j = 0; j < dims.p; ++j) {
    m.lik_to_nu[j] = message_to_nu(cache, pb.designs, dims, j);
    m.pen_to_nu[j] = penalization_to_nu(cache, dims, hyper, j);
    state.nu[j] = m.lik_to_nu[j] + m.pen_to_nu[j];
    refresh_nu(cache, state, pb.designs, dims, j);
  }
  // variance nodes
  for (std::size_t j = 0; j < dims.p; ++j) {
    m.lik_to_sigma_eps[j] = message_to_sigma_eps(cache, pb.designs, dims, j);
    m.iter_to_sigma_eps[j] = iterated_to_sigma(cache.a_eps[j]);
    state.sigma_eps[j] = m.lik_to_sigma_eps[j] + m.iter_to_sigma_eps[j];

    m.pen_to_sigma_mu[j] = penalization_to_sigma(cache, dims, j, 0);
    m.iter_to_sigma_mu[j] = iterated_to_sigma(cache.a_mu[j]);
    state.sigma_mu[j] = m.pen_to_sigma_mu[j] + m.iter_to_sigma_mu[j];

    for (int l = 0; l < dims.L; ++l) {
      m.pen_to_sigma_psi[j][l] = penalization_to_sigma(cache, dims, j, l + 1);
      m.iter_to_sigma_psi[j][l] = iterated_to_sigma(cache.a_psi[j][l]);
      state.sigma_psi[j][l] = m.pen_to_sigma_psi[j][l] + m.iter_to_sigma_psi[j][l];
    }
  }
  refresh_scales(cache, state, dims);
  // auxiliary nodes
  for (std::size_t j = 0; j < dims.p; ++j) {
    m.iter_to_a_eps[j] = iterated_to_a(cache.sigma_eps[j]);
    m.prior_to_a_eps[j] = pb.prior.a;
    state.a_eps[j] = m.iter_to_a_eps[j] + m.prior_to_a_eps[j];

    m.iter_to_a_mu[j] = iterated_to_a(cache.sigma_mu[j]);
    m.prior_to_a_mu[j] = pb.prior.a;
    state.a_mu[j] = m.iter_to_a_mu[j] + m.prior_to_a_mu[j];

    for (int l = 0; l < dims.L; ++l) {
      m.iter_to_a_psi[j][l] = iterated_to_a(cache.sigma_psi[j][l]);
      m.prior_to_a_psi[j][l] = pb.prior.a;
      state.a_psi[j][l] = m.iter_to_a_psi[j][l] + m.prior_to_a_psi[j][l];
    }
  }
  refresh_scales(cache, state, dims);
}

RawFit run(const FunctionalDataset& data, const std::vector<SplineBasis>& bases,
           const Hyperparameters& hyper, Engine engine) {
  const Problem pb = setup(data, bases, hyper);
  RawFit out;
  out.engine = engine;
  out.dims = pb.dims;
  out.hyper = hyper;
  out.bases = bases;
  out.dataset_fingerprint = dataset_fingerprint(data);
  out.state = initialize_state(data, pb.designs, pb.dims, hyper);
  out.cache = refresh_moments(out.state, pb.designs, pb.dims);
  if (engine == Engine::vmp) out.messages = initial_messages(out.state, pb);

  // Largest tolerated relative decrease of the ELBO between sweeps.
  const double allowed_drop = engine == Engine::mfvb ? 1e-8 : 1e-6;

  for (int it = 1; it <= hyper.max_iter; ++it) {
    if (engine == Engine::mfvb) {
      mfvb_sweep(out.state, out.cache, pb, hyper);
    } else {
      vmp_iteration(out.state, out.cache, *out.messages, pb, hyper);
    }
    const double value = elbo(out.state, out.cache, pb.designs, pb.dims, hyper);
    if (!std::isfinite(value)) throw NumericalError("ELBO is not finite at iteration " +
                                                    std::to_string(it));
    out.iterations = it;
    out.state.iteration = it;

    if (!out.elbo_trace.empty()) {
      const double prev = out.elbo_trace.back();
      const double rel = (value - prev) / std::abs(prev);
      if (rel < -allowed_drop) {
        throw AlgorithmError(to_string(engine) + ": ELBO decreased from " + std::to_string(prev) +
                             " to " + std::to_string(value) + " at iteration " +
                             std::to_string(it));
      }
      if (rel < 0.0) {
        spdlog::debug("{}: ELBO dipped by {:.3g} (relative) at iteration {}", to_string(engine),
                      -rel, it);
      }
      out.elbo_trace.push_back(value);
      out.state.elbo_trace = out.elbo_trace;
      if (std::abs(rel) < hyper.tau) {
        out.converged = true;
        break;
      }
    } else {
      out.elbo_trace.push_back(value);
      out.state.elbo_trace = out.elbo_trace;
    }
    spdlog::trace("{} iteration {} ELBO {:.10g}", to_string(engine), it, value);
  }
  if (!out.converged) {
    spdlog::warn("{} did not converge within {} iterations (last ELBO {:.10g})",
                 to_string(engine), hyper.max_iter, out.elbo_trace.back());
  }
  return out;
}

}  // namespace

RawFit fit_mfvb(const FunctionalDataset& data, const std::vector<SplineBasis>& bases,
                const Hyperparameters& hyper) {
  return run(data, bases, hyper, Engine::mfvb);
}

RawFit fit_vmp(const FunctionalDataset& data, const std::vector<SplineBasis>& bases,
               const Hyperparameters& hyper) {
  return run(data, bases, hyper, Engine::vmp);
}

RawFit fit(const FunctionalDataset& data, const std::vector<SplineBasis>& bases,
           const Hyperparameters& hyper, Engine engine) {
  return run(data, bases, hyper, engine);
}

RawFit fit(const FunctionalDataset& data, const Hyperparameters& hyper, Engine engine) {
  const ModelDims dims = ModelDims::from(data, hyper);
  return run(data, build_bases(dims.K), hyper, engine);
}

}  // namespace bmfpca
