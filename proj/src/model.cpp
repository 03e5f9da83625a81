#include "bmfpca/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include <spdlog/spdlog.h>

#include "bmfpca/errors.hpp"

namespace bmfpca {

void Hyperparameters::check() const {
  if (!(sigma_beta > 0.0)) throw ConfigError("sigma_beta must be positive");
  if (!(A > 0.0)) throw ConfigError("A must be positive");
  if (L < 1) throw ConfigError("the number of components L must be at least 1");
  if (!(tau > 0.0)) throw ConfigError("tolerance tau must be positive");
  if (max_iter < 1) throw ConfigError("max_iter must be at least 1");
  if (K.empty()) throw ConfigError("no spline count given");
  for (int k : K) {
    if (k < kMinSplines) {
      throw ConfigError("number of splines " + std::to_string(k) + " is below the minimum of " +
                        std::to_string(kMinSplines));
    }
  }
}

ModelDims ModelDims::from(const FunctionalDataset& data, const Hyperparameters& hyper) {
  hyper.check();
  if (hyper.K.size() != 1 && hyper.K.size() != data.p()) {
    throw ConfigError("got " + std::to_string(hyper.K.size()) + " spline counts for " +
                      std::to_string(data.p()) + " variables");
  }
  ModelDims dims;
  dims.n = data.n();
  dims.p = data.p();
  dims.L = hyper.L;
  for (std::size_t j = 0; j < data.p(); ++j) dims.K.push_back(hyper.num_splines(j));
  return dims;
}

Designs build_designs(const FunctionalDataset& data, const std::vector<SplineBasis>& bases) {
  if (bases.size() != data.p()) throw ShapeError("one spline basis per variable is required");
  Designs designs(data.p());
  for (std::size_t j = 0; j < data.p(); ++j) {
    designs[j].resize(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
      const Series& s = data.series(i, j);
      SeriesDesign& d = designs[j][i];
      d.C = bases[j].design(s.times);
      d.CtC = d.C.transpose() * d.C;
      d.Ctx = d.C.transpose() * s.values;
      d.xtx = s.values.squaredNorm();
      d.count = static_cast<int>(s.size());
    }
  }
  return designs;
}

PriorParams prior_natural_params(const Hyperparameters& hyper) {
  PriorParams prior;
  prior.zeta = gauss_natural_from_precision(Eigen::VectorXd::Zero(hyper.L),
                                            Eigen::MatrixXd::Identity(hyper.L, hyper.L),
                                            GaussianForm::vech);
  prior.a = invchisq_to_natural(1.0, 1.0 / (hyper.A * hyper.A));
  prior.sigma_beta_sq = hyper.sigma_beta * hyper.sigma_beta;
  return prior;
}

VariationalState initialize_state(const FunctionalDataset& data, const Designs& designs,
                                  const ModelDims& dims, const Hyperparameters& hyper) {
  constexpr double kInitCov = 0.1;
  constexpr double kInitSd = 0.1;
  constexpr double kRidge = 1e-6;

  VariationalState state;
  std::mt19937_64 rng(hyper.seed);
  std::normal_distribution<double> normal(0.0, kInitSd);
  const InvChiSqNatural scale_init = invchisq_to_natural(2.0, 2.0);

  for (std::size_t j = 0; j < dims.p; ++j) {
    const int d = dims.coef_dim(j);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dims.nu_dim(j));

    if (data.total_count(j) < static_cast<std::size_t>(d)) {
      spdlog::warn("variable {}: {} pooled observations for {} coefficients; mean starts at zero",
                   data.variable_names()[j], data.total_count(j), d);
    } else {
      Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
      for (const auto& sd : designs[j]) {
        gram += sd.CtC;
        rhs += sd.Ctx;
      }
      gram.diagonal().array() += kRidge;
      mean.head(d) = gram.ldlt().solve(rhs);
    }
    for (Eigen::Index k = d; k < mean.size(); ++k) mean[k] = normal(rng);

    const Eigen::MatrixXd precision =
        Eigen::MatrixXd::Identity(mean.size(), mean.size()) / kInitCov;
    state.nu.push_back(gauss_natural_from_precision(precision * mean, precision, GaussianForm::vec));

    state.sigma_eps.push_back(scale_init);
    state.a_eps.push_back(scale_init);
    state.sigma_mu.push_back(scale_init);
    state.a_mu.push_back(scale_init);
    state.sigma_psi.emplace_back(dims.L, scale_init);
    state.a_psi.emplace_back(dims.L, scale_init);
  }

  const PriorParams prior = prior_natural_params(hyper);
  state.zeta.assign(dims.n, prior.zeta);
  return state;
}

Eigen::VectorXd MomentCache::h_mupsi(std::size_t j, std::size_t i) const {
  const Eigen::MatrixXd& h = H[j][i];
  return h.row(0).tail(h.cols() - 1).transpose();
}

Eigen::MatrixXd MomentCache::H_psi(std::size_t j, std::size_t i) const {
  const Eigen::MatrixXd& h = H[j][i];
  return h.bottomRightCorner(h.rows() - 1, h.cols() - 1);
}

namespace {

ScaleMoments scale_moments(const InvChiSqNatural& eta, const std::string& what) {
  if (!eta.proper()) throw NumericalError("q-density of " + what + " is improper");
  return {invchisq_mean_reciprocal(eta), invchisq_mean_log(eta)};
}

void refresh_H(MomentCache& cache, const Designs& designs, const ModelDims& dims,
               std::size_t j) {
  const int d = dims.coef_dim(j);
  const int b = dims.L + 1;
  const Eigen::MatrixXd& V = cache.V_mean[j];
  const Eigen::MatrixXd& cov = cache.nu_cov[j];
  for (std::size_t i = 0; i < dims.n; ++i) {
    const SeriesDesign& sd = designs[j][i];
    Eigen::MatrixXd h = V.transpose() * sd.CtC * V;
    for (int a = 0; a < b; ++a) {
      for (int c = a; c < b; ++c) {
        const double tr = (cov.block(a * d, c * d, d, d).array() * sd.CtC.array()).sum();
        h(a, c) += tr;
        if (c != a) h(c, a) = h(a, c);
      }
    }
    cache.H[j][i] = 0.5 * (h + h.transpose());
    cache.VtCtx[j][i] = V.transpose() * sd.Ctx;
  }
}

}  // namespace

void refresh_nu(MomentCache& cache, const VariationalState& state, const Designs& designs,
                const ModelDims& dims, std::size_t j) {
  GaussianMoments m;
  try {
    m = gauss_from_natural(state.nu[j]);
  } catch (const NumericalError& e) {
    throw NumericalError("q(nu) for variable " + std::to_string(j) + ": " + e.what());
  }
  cache.nu_mean[j] = m.mean;
  cache.nu_cov[j] = m.cov;
  cache.V_mean[j] = Eigen::Map<const Eigen::MatrixXd>(m.mean.data(), dims.coef_dim(j), dims.L + 1);
  refresh_H(cache, designs, dims, j);
}

void refresh_zeta(MomentCache& cache, const VariationalState& state, std::size_t i) {
  GaussianMoments m;
  try {
    m = gauss_from_natural(state.zeta[i]);
  } catch (const NumericalError& e) {
    throw NumericalError("q(zeta) for subject " + std::to_string(i) + ": " + e.what());
  }
  const Eigen::Index L = m.mean.size();
  cache.zeta_mean[i] = m.mean;
  cache.zeta_cov[i] = m.cov;
  Eigen::VectorXd zt(L + 1);
  zt[0] = 1.0;
  zt.tail(L) = m.mean;
  Eigen::MatrixXd second = zt * zt.transpose();
  second.bottomRightCorner(L, L) += m.cov;
  cache.zt_mean[i] = zt;
  cache.zt_second[i] = second;
}

void refresh_scales(MomentCache& cache, const VariationalState& state, const ModelDims& dims) {
  for (std::size_t j = 0; j < dims.p; ++j) {
    const std::string tag = " (variable " + std::to_string(j) + ")";
    cache.sigma_eps[j] = scale_moments(state.sigma_eps[j], "sigma_eps^2" + tag);
    cache.a_eps[j] = scale_moments(state.a_eps[j], "a_eps" + tag);
    cache.sigma_mu[j] = scale_moments(state.sigma_mu[j], "sigma_mu^2" + tag);
    cache.a_mu[j] = scale_moments(state.a_mu[j], "a_mu" + tag);
    for (int l = 0; l < dims.L; ++l) {
      const std::string ltag = " (variable " + std::to_string(j) + ", component " +
                               std::to_string(l + 1) + ")";
      cache.sigma_psi[j][l] = scale_moments(state.sigma_psi[j][l], "sigma_psi^2" + ltag);
      cache.a_psi[j][l] = scale_moments(state.a_psi[j][l], "a_psi" + ltag);
    }
  }
}

MomentCache refresh_moments(const VariationalState& state, const Designs& designs,
                            const ModelDims& dims) {
  MomentCache cache;
  cache.nu_mean.resize(dims.p);
  cache.nu_cov.resize(dims.p);
  cache.V_mean.resize(dims.p);
  cache.H.assign(dims.p, std::vector<Eigen::MatrixXd>(dims.n));
  cache.VtCtx.assign(dims.p, std::vector<Eigen::VectorXd>(dims.n));
  cache.zeta_mean.resize(dims.n);
  cache.zeta_cov.resize(dims.n);
  cache.zt_mean.resize(dims.n);
  cache.zt_second.resize(dims.n);
  cache.sigma_eps.resize(dims.p);
  cache.a_eps.resize(dims.p);
  cache.sigma_mu.resize(dims.p);
  cache.a_mu.resize(dims.p);
  cache.sigma_psi.assign(dims.p, std::vector<ScaleMoments>(dims.L));
  cache.a_psi.assign(dims.p, std::vector<ScaleMoments>(dims.L));

  for (std::size_t i = 0; i < dims.n; ++i) refresh_zeta(cache, state, i);
  for (std::size_t j = 0; j < dims.p; ++j) refresh_nu(cache, state, designs, dims, j);
  refresh_scales(cache, state, dims);
  return cache;
}

double expected_rss(const MomentCache& cache, const Designs& designs, std::size_t j,
                    std::size_t i) {
  const SeriesDesign& sd = designs[j][i];
  return sd.xtx - 2.0 * cache.zt_mean[i].dot(cache.VtCtx[j][i]) +
         (cache.zt_second[i].array() * cache.H[j][i].array()).sum();
}

double expected_penalized_sq(const MomentCache& cache, const ModelDims& dims, std::size_t j,
                             int block) {
  const int d = dims.coef_dim(j);
  const int K = dims.K[j];
  const Eigen::Index start = static_cast<Eigen::Index>(block) * d + 2;
  return cache.nu_mean[j].segment(start, K).squaredNorm() +
         cache.nu_cov[j].block(start, start, K, K).trace();
}

}  // namespace bmfpca
