#include "bmfpca/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <spdlog/spdlog.h>

#include "bmfpca/errors.hpp"

namespace bmfpca {

Eigen::VectorXd trapezoid_weights(int n_g) {
  if (n_g < 2) throw ConfigError("grid needs at least two points");
  const double h = 1.0 / (n_g - 1);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n_g, h);
  w[0] = 0.5 * h;
  w[n_g - 1] = 0.5 * h;
  return w;
}

namespace {

Eigen::VectorXd stacked_weights(int n_g, Eigen::Index total) {
  if (total % n_g != 0) {
    throw ShapeError("stacked vector of length " + std::to_string(total) +
                     " is not a multiple of the grid size " + std::to_string(n_g));
  }
  const Eigen::VectorXd w = trapezoid_weights(n_g);
  return w.replicate(total / n_g, 1);
}

}  // namespace

double h_inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g, int n_g) {
  if (f.size() != g.size()) throw ShapeError("h_inner: vectors differ in length");
  const Eigen::VectorXd w = stacked_weights(n_g, f.size());
  return (w.array() * f.array() * g.array()).sum();
}

double h_norm(const Eigen::VectorXd& f, int n_g) { return std::sqrt(h_inner(f, f, n_g)); }

Eigen::MatrixXd raw_functions_on_grid(const RawFit& raw, int n_g) {
  const Eigen::VectorXd t = grid_times(n_g);
  const auto p = static_cast<Eigen::Index>(raw.dims.p);
  Eigen::MatrixXd out(p * n_g, raw.dims.L + 1);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::MatrixXd Cg = raw.bases[j].design(t);
    out.middleRows(j * n_g, n_g) = Cg * raw.cache.V_mean[j];
  }
  return out;
}

Eigen::MatrixXd raw_trajectories(const RawFit& raw, int n_g) {
  const Eigen::MatrixXd F = raw_functions_on_grid(raw, n_g);
  Eigen::MatrixXd out(F.rows(), static_cast<Eigen::Index>(raw.dims.n));
  for (std::size_t i = 0; i < raw.dims.n; ++i) out.col(i) = F * raw.cache.zt_mean[i];
  return out;
}

Eigen::MatrixXd fitted_trajectories(const OrthonormalizedFit& fit) {
  const int n_g = fit.grid_size();
  Eigen::VectorXd mu(static_cast<Eigen::Index>(fit.num_variables()) * n_g);
  for (int j = 0; j < fit.num_variables(); ++j) mu.segment(j * n_g, n_g) = fit.mean[j];
  Eigen::MatrixXd out = fit.eigenfunctions * fit.scores.transpose();
  out.colwise() += mu;
  return out;
}

OrthonormalizedFit orthonormalize(const RawFit& raw, int n_g) {
  const int L = raw.dims.L;
  const auto n = static_cast<Eigen::Index>(raw.dims.n);
  if (L < 1) throw DomainError("orthonormalisation needs at least one component");
  if (n < 2) throw DomainError("orthonormalisation needs at least two subjects");

  const Eigen::MatrixXd F = raw_functions_on_grid(raw, n_g);
  const Eigen::VectorXd sw = stacked_weights(n_g, F.rows()).cwiseSqrt();

  OrthonormalizedFit fit;
  fit.engine = raw.engine;
  fit.times = grid_times(n_g);
  for (std::size_t j = 0; j < raw.dims.p; ++j) {
    fit.mean.push_back(F.col(0).segment(static_cast<Eigen::Index>(j) * n_g, n_g));
  }

  // Psi under the discretised H inner product: W^{1/2} Psi = U D V^T
  const Eigen::MatrixXd weighted = sw.asDiagonal() * F.rightCols(L);
  Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner> svd(
      weighted, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericalError("SVD of the latent functions failed");
  const Eigen::MatrixXd& U = svd.matrixU();
  const Eigen::MatrixXd& V = svd.matrixV();
  const Eigen::VectorXd& D = svd.singularValues();

  Eigen::MatrixXd Xi(n, L);
  for (Eigen::Index i = 0; i < n; ++i) Xi.row(i) = raw.cache.zeta_mean[i].transpose();

  const Eigen::MatrixXd VD = V * D.asDiagonal();
  const Eigen::MatrixXd S = Xi * VD;
  const Eigen::MatrixXd centered = S.rowwise() - S.colwise().mean();
  const Eigen::MatrixXd C = centered.transpose() * centered / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (C + C.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("score covariance eigensolver failed");
  const Eigen::MatrixXd Q = eig.eigenvectors().rowwise().reverse();
  const Eigen::VectorXd lambda = eig.eigenvalues().reverse();

  fit.eigenfunctions = sw.cwiseInverse().asDiagonal() * (U * Q);
  fit.transport = VD * Q;
  fit.scores = Xi * fit.transport;
  fit.eigenvalues = lambda.cwiseMax(0.0);
  for (int l = 0; l < L; ++l) {
    fit.near_zero.push_back(lambda[l] <= 1e-12);
    if (fit.near_zero.back()) {
      spdlog::debug("component {} has near-zero score variance {:.3g}", l + 1, lambda[l]);
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::MatrixXd cov = fit.transport.transpose() * raw.cache.zeta_cov[i] * fit.transport;
    fit.score_cov.push_back(0.5 * (cov + cov.transpose()));
  }
  return align_signs(std::move(fit));
}

OrthonormalizedFit align_signs(OrthonormalizedFit fit) {
  for (Eigen::Index l = 0; l < fit.eigenfunctions.cols(); ++l) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < fit.eigenfunctions.rows(); ++r) {
      const double v = std::abs(fit.eigenfunctions(r, l));
      if (v > best) {
        best = v;
        arg = r;
      }
    }
    if (fit.eigenfunctions(arg, l) < 0.0) {
      fit.eigenfunctions.col(l) *= -1.0;
      fit.scores.col(l) *= -1.0;
      if (fit.transport.cols() > l) fit.transport.col(l) *= -1.0;
      for (auto& cov : fit.score_cov) {
        cov.row(l) *= -1.0;
        cov.col(l) *= -1.0;
      }
    }
  }
  return fit;
}

Eigen::VectorXd pve(const Eigen::VectorXd& eigenvalues) {
  const double total = eigenvalues.sum();
  if (!(total > 0.0)) throw DomainError("all eigenvalues are zero; proportions are undefined");
  return eigenvalues / total;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<Trajectory> predict_trajectory(const VariationalState& state,
                                           const std::vector<SplineBasis>& bases,
                                           std::size_t i, const Eigen::VectorXd& times,
                                           std::uint64_t seed, int samples) {
  if (i >= state.zeta.size()) throw ConfigError("subject index out of range");
  if (samples < 2) throw ConfigError("at least two samples are needed for bands");
  const std::size_t p = state.nu.size();

  const GaussianMoments zeta = gauss_from_natural(state.zeta[i]);
  const Eigen::Index L = zeta.mean.size();
  std::vector<GaussianMoments> nu;
  for (std::size_t j = 0; j < p; ++j) nu.push_back(gauss_from_natural(state.nu[j]));

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  auto draw = [&](const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor) {
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
    return Eigen::VectorXd(mean + factor * z);
  };

  const Eigen::MatrixXd zeta_factor = Eigen::LLT<Eigen::MatrixXd>(zeta.cov).matrixL();
  std::vector<Eigen::MatrixXd> nu_factor;
  std::vector<Eigen::MatrixXd> coefs;
  for (std::size_t j = 0; j < p; ++j) {
    nu_factor.emplace_back(Eigen::LLT<Eigen::MatrixXd>(nu[j].cov).matrixL());
    coefs.emplace_back(bases[j].num_columns(), samples);
  }

  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd zt(L + 1);
    zt[0] = 1.0;
    zt.tail(L) = draw(zeta.mean, zeta_factor);
    for (std::size_t j = 0; j < p; ++j) {
      const Eigen::VectorXd v = draw(nu[j].mean, nu_factor[j]);
      const Eigen::Index d = bases[j].num_columns();
      coefs[j].col(s) = Eigen::Map<const Eigen::MatrixXd>(v.data(), d, L + 1) * zt;
    }
  }

  Eigen::VectorXd zt_mean(L + 1);
  zt_mean[0] = 1.0;
  zt_mean.tail(L) = zeta.mean;

  std::vector<Trajectory> out;
  std::vector<double> row(samples);
  for (std::size_t j = 0; j < p; ++j) {
    const Eigen::MatrixXd C = bases[j].design(times);
    const Eigen::Index d = bases[j].num_columns();
    Trajectory tr;
    tr.times = times;
    tr.estimate = C * (Eigen::Map<const Eigen::MatrixXd>(nu[j].mean.data(), d, L + 1) * zt_mean);
    const Eigen::MatrixXd curves = C * coefs[j];
    tr.lower.resize(times.size());
    tr.upper.resize(times.size());
    for (Eigen::Index k = 0; k < times.size(); ++k) {
      for (int s = 0; s < samples; ++s) row[s] = curves(k, s);
      std::sort(row.begin(), row.end());
      tr.lower[k] = quantile_sorted(row, 0.025);
      tr.upper[k] = quantile_sorted(row, 0.975);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace bmfpca
