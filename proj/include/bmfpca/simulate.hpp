#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bmfpca/dataset.hpp"
#include "bmfpca/engines.hpp"
#include "bmfpca/model.hpp"
#include "bmfpca/postprocess.hpp"
#include "bmfpca/select.hpp"

namespace bmfpca {

enum class FunctionFamily { periodic, bsplines };

struct SimulationScenario {
  int n = 100;
  int p = 3;
  int L_true = 2;
  int obs_min = 10;
  int obs_max = 20;
  FunctionFamily family = FunctionFamily::periodic;
  double alpha = 2.0;
  double rho = 1.0;
  double noise_sd = 1.0;
  // Variables (0-based) drawn with their own observation range.
  std::vector<int> sparse_variables;
  int sparse_obs_min = 5;
  int sparse_obs_max = 10;
  std::uint64_t seed = 1;

  void check() const;
};

SimulationScenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const SimulationScenario& s);
SimulationScenario load_scenario(const std::filesystem::path& path);

// Largest L supported by the orthonormalised B-spline family.
inline constexpr int kMaxBsplineComponents = 8;

class GroundTruth {
 public:
  GroundTruth(const SimulationScenario& scenario);

  int p() const { return p_; }
  int L() const { return L_; }
  double noise_sd() const { return noise_sd_; }
  // l^{-1/alpha}
  const Eigen::VectorXd& score_sd() const { return score_sd_; }

  // 0-based variable j and component l.
  double mean(int j, double t) const;
  double eigenfunction(int l, int j, double t) const;

  // Per-variable values on the equidistant n_g grid, and stacked versions.
  Eigen::VectorXd mean_on_grid(int j, int n_g) const;
  Eigen::VectorXd eigenfunction_on_grid(int l, int n_g) const;  // stacked p * n_g

  // Shared scores (n x L); with rho < 1 the average of the variable-specific
  // scores.
  Eigen::MatrixXd scores;
  // Variable-specific scores (rho < 1 only; otherwise every entry equals scores).
  std::vector<Eigen::MatrixXd> variable_scores;

 private:
  double raw_bspline(int l, int j, double t) const;

  FunctionFamily family_;
  int p_;
  int L_;
  double noise_sd_;
  Eigen::VectorXd score_sd_;
  std::vector<double> knots_;
  Eigen::MatrixXd gs_;  // L x L lower triangular Gram-Schmidt coefficients
};

std::pair<FunctionalDataset, GroundTruth> generate_dataset(const SimulationScenario& scenario);

// ---- metrics ---------------------------------------------------------------

// For each true component: the matched estimated column (-1 if none) and the
// sign that aligns it, chosen greedily by largest absolute score correlation.
struct ComponentAlignment {
  std::vector<int> index;
  std::vector<double> sign;
};
ComponentAlignment align_components(const Eigen::MatrixXd& estimated,
                                    const Eigen::MatrixXd& truth);

// sqrt(mean_i (est_il - true_il)^2) per column.
Eigen::VectorXd rmse_scores(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth);

// Trapezoid approximation of int_0^1 |f - g|^2 on the equidistant grid; for
// stacked vectors of p variables, the average of the per-variable values.
double ise(const Eigen::VectorXd& estimated, const Eigen::VectorXd& truth, int n_g);

// ---- replicate studies -----------------------------------------------------

struct ReplicateOptions {
  int replicates = 1;
  Engine engine = Engine::mfvb;
  int L_max = 10;
  KStrategy k_strategy = KStrategy::rule_of_thumb;
  std::vector<int> k_candidates = {5, 10, 15, 20};
  double pve_threshold = 0.95;
  int grid_size = kDefaultGridSize;
  bool multivariate = true;
  // Per-variable univariate fits, with scores and s.d.s rescaled by sqrt(p).
  bool univariate = false;
  // Restrict univariate fits to these variables (empty = all).
  std::vector<int> univariate_variables;
  Hyperparameters hyper;
  int threads = 1;
};

struct ReplicateRow {
  int replicate = 0;
  std::string method;  // "mfpca" or "ufpca"
  int variable = -1;   // -1 for the multivariate fit
  int component = 0;   // 0 = mean function, l >= 1 eigenfunction / score
  double rmse = 0.0;   // NaN for the mean row
  double ise = 0.0;
  int selected_L = 0;
  double coverage = 0.0;   // fraction of subjects whose true score lies in the 95% interval
  double mean_width = 0.0; // average 95% interval width
  double runtime = 0.0;    // seconds
  int iterations = 0;
  bool converged = false;
  std::string error;
};

std::uint64_t replicate_seed(std::uint64_t seed, int replicate);

std::vector<ReplicateRow> run_replicates(const SimulationScenario& scenario,
                                         const ReplicateOptions& options);

void write_replicates_csv(const std::vector<ReplicateRow>& rows,
                          const std::filesystem::path& path);

// Ground truth on the grid: variable,t,mean,psi_1..psi_L.
void write_truth_csv(const GroundTruth& truth, int n_g, const std::filesystem::path& path);
// subject,zeta_1..zeta_L
void write_true_scores_csv(const FunctionalDataset& data, const GroundTruth& truth,
                           const std::filesystem::path& path);

}  // namespace bmfpca
