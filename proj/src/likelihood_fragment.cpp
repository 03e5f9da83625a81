#include "bmfpca/likelihood_fragment.hpp"

#include "bmfpca/errors.hpp"

namespace bmfpca {

GaussianNatural message_to_nu(const MomentCache& cache, const Designs& designs,
                              const ModelDims& dims, std::size_t j) {
  const int d = dims.coef_dim(j);
  const int b = dims.L + 1;
  const double s = cache.sigma_eps[j].recip;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(b * d);
  Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(b * d, b * d);

  for (std::size_t i = 0; i < dims.n; ++i) {
    const SeriesDesign& sd = designs[j][i];
    if (sd.CtC.rows() != d) throw ShapeError("design width does not match K_j + 2");
    const Eigen::VectorXd& zt = cache.zt_mean[i];
    const Eigen::MatrixXd& zz = cache.zt_second[i];
    for (int a = 0; a < b; ++a) {
      h.segment(a * d, d).noalias() += zt[a] * sd.Ctx;
      for (int c = 0; c < b; ++c) {
        precision.block(a * d, c * d, d, d).noalias() += zz(a, c) * sd.CtC;
      }
    }
  }
  h *= s;
  precision *= s;
  return gauss_natural_from_precision(h, precision, GaussianForm::vec);
}

GaussianNatural message_to_zeta(const MomentCache& cache, [[maybe_unused]] const Designs& designs,
                                const ModelDims& dims, std::size_t i) {
  const int L = dims.L;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(L);
  Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(L, L);
  for (std::size_t j = 0; j < dims.p; ++j) {
    const double s = cache.sigma_eps[j].recip;
    const Eigen::MatrixXd& H = cache.H[j][i];
    h.noalias() += s * (cache.VtCtx[j][i].tail(L) - H.row(0).tail(L).transpose());
    precision.noalias() += s * H.bottomRightCorner(L, L);
  }
  return gauss_natural_from_precision(h, precision, GaussianForm::vech);
}

InvChiSqNatural message_to_sigma_eps(const MomentCache& cache, const Designs& designs,
                                     const ModelDims& dims, std::size_t j) {
  double count = 0.0;
  double rss = 0.0;
  for (std::size_t i = 0; i < dims.n; ++i) {
    count += designs[j][i].count;
    rss += expected_rss(cache, designs, j, i);
  }
  return {-0.5 * count, -0.5 * rss};
}

FragmentMessages run_fragment(const VariationalState& state, const Designs& designs,
                              const ModelDims& dims) {
  const MomentCache cache = refresh_moments(state, designs, dims);
  FragmentMessages out;
  out.to_nu.resize(dims.p);
  out.to_sigma_eps.resize(dims.p);
  out.to_zeta.resize(dims.n);
  for (std::size_t j = 0; j < dims.p; ++j) {
    out.to_nu[j] = message_to_nu(cache, designs, dims, j);
    out.to_sigma_eps[j] = message_to_sigma_eps(cache, designs, dims, j);
  }
  for (std::size_t i = 0; i < dims.n; ++i) {
    out.to_zeta[i] = message_to_zeta(cache, designs, dims, i);
  }
  return out;
}

}  // namespace bmfpca
