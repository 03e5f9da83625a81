#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "bmfpca/dataset.hpp"
#include "bmfpca/model.hpp"
#include "bmfpca/simulate.hpp"

namespace bmfpca::testkit {

inline Eigen::MatrixXd random_spd(int d, std::mt19937_64& rng, double ridge = 0.5) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd a(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) a(r, c) = z(rng);
  return a * a.transpose() / d + ridge * Eigen::MatrixXd::Identity(d, d);
}

inline Eigen::VectorXd random_vector(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Eigen::VectorXd v(d);
  for (int k = 0; k < d; ++k) v[k] = z(rng);
  return v;
}

// Small periodic scenario used by many tests.
inline SimulationScenario small_scenario(std::uint64_t seed, int n = 30, int p = 2) {
  SimulationScenario s;
  s.n = n;
  s.p = p;
  s.L_true = 2;
  s.obs_min = 8;
  s.obs_max = 14;
  s.seed = seed;
  return s;
}

// State whose every inverse-chi^2 factor is (shape, scale) and whose Gaussian
// factors have the given moments.
inline VariationalState state_from_moments(const ModelDims& dims,
                                           const std::vector<Eigen::VectorXd>& nu_mean,
                                           const std::vector<Eigen::MatrixXd>& nu_cov,
                                           const std::vector<Eigen::VectorXd>& zeta_mean,
                                           const std::vector<Eigen::MatrixXd>& zeta_cov,
                                           double shape = 3.0, double scale = 4.0) {
  VariationalState s;
  for (std::size_t j = 0; j < dims.p; ++j) {
    s.nu.push_back(gauss_to_natural(nu_mean[j], nu_cov[j], GaussianForm::vec));
  }
  for (std::size_t i = 0; i < dims.n; ++i) {
    s.zeta.push_back(gauss_to_natural(zeta_mean[i], zeta_cov[i], GaussianForm::vech));
  }
  const InvChiSqNatural f = invchisq_to_natural(shape, scale);
  s.sigma_eps.assign(dims.p, f);
  s.a_eps.assign(dims.p, f);
  s.sigma_mu.assign(dims.p, f);
  s.a_mu.assign(dims.p, f);
  s.sigma_psi.assign(dims.p, std::vector<InvChiSqNatural>(dims.L, f));
  s.a_psi.assign(dims.p, std::vector<InvChiSqNatural>(dims.L, f));
  return s;
}

inline SeriesDesign design_from(const Eigen::MatrixXd& C, const Eigen::VectorXd& x) {
  SeriesDesign sd;
  sd.C = C;
  sd.CtC = C.transpose() * C;
  sd.Ctx = C.transpose() * x;
  sd.xtx = x.squaredNorm();
  sd.count = static_cast<int>(x.size());
  return sd;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("bmfpca_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace bmfpca::testkit
