#pragma once

#include <vector>

#include "bmfpca/expfam.hpp"
#include "bmfpca/model.hpp"

namespace bmfpca {

// Messages leaving the multivariate functional principal component Gaussian
// likelihood factor.
struct FragmentMessages {
  std::vector<GaussianNatural> to_nu;    // per j, vec form
  std::vector<GaussianNatural> to_zeta;  // per i, vech form
  std::vector<InvChiSqNatural> to_sigma_eps;  // per j
};

// eta1 = s sum_i E(zeta~_i) (x) C_i^T x_i, precision s sum_i E(zeta~ zeta~^T) (x) C_i^T C_i,
// with s = E(1/sigma_eps^2). Accumulated block by block.
GaussianNatural message_to_nu(const MomentCache& cache, const Designs& designs,
                              const ModelDims& dims, std::size_t j);

// eta1 = sum_j s_j {E(V_psi)^T C^T x - E(h_mupsi)}, precision sum_j s_j E(H_psi).
GaussianNatural message_to_zeta(const MomentCache& cache, const Designs& designs,
                                const ModelDims& dims, std::size_t i);

// (-1/2 sum_i n_i, -1/2 sum_i E||x_i - C_i V zeta~_i||^2)
InvChiSqNatural message_to_sigma_eps(const MomentCache& cache, const Designs& designs,
                                     const ModelDims& dims, std::size_t j);

// Refreshes the moments of the state once and emits every message.
FragmentMessages run_fragment(const VariationalState& state, const Designs& designs,
                              const ModelDims& dims);

}  // namespace bmfpca
