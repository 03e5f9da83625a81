#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmfpca/dataset.hpp"
#include "bmfpca/engines.hpp"
#include "bmfpca/model.hpp"

namespace bmfpca {

enum class KStrategy { rule_of_thumb, model_choice };
enum class LStrategy { pve, model_choice };

struct SelectionConfig {
  int k_min = 5;
  int k_max = 20;
  int l_min = 1;
  int l_max = 10;
  double pve_threshold = 0.95;
  KStrategy k_strategy = KStrategy::rule_of_thumb;
  LStrategy l_strategy = LStrategy::pve;

  void check() const;
};

// K_j = max(min(floor(median_i n_i^{(j)} / 4), 40), 7).
std::vector<int> rule_of_thumb_K(const FunctionalDataset& data);
int rule_of_thumb_K(double median_count);

struct Candidate {
  int K = 0;
  int L = 0;
};

struct CandidateResult {
  Candidate candidate;
  double elbo = 0.0;
  double probability = 0.0;
  bool converged = false;
  bool failed = false;
  std::string error;
};

// exp(e - max e) / sum, i.e. posterior probabilities under a uniform prior.
Eigen::VectorXd softmax_probabilities(const std::vector<double>& elbos);

// Fits every candidate independently (same K for all variables) and returns
// p(K, L | x) proportional to exp(ELBO). Non-converged candidates keep their
// final ELBO and are flagged. Throws AlgorithmError when all candidates fail.
std::vector<CandidateResult> model_choice(const FunctionalDataset& data,
                                          const std::vector<Candidate>& candidates,
                                          const Hyperparameters& hyper, Engine engine,
                                          int threads = 1);

// Index of the most probable candidate that did not fail.
std::size_t best_candidate(const std::vector<CandidateResult>& results);

// Grid of (K, L) candidates for the given ranges.
std::vector<Candidate> candidate_grid(const std::vector<int>& Ks, const std::vector<int>& Ls);

// Smallest L whose cumulative PVE reaches the threshold.
int select_L_pve(const Eigen::VectorXd& pve, double threshold);

// Runs task(k) for k in [0, count) on up to `threads` workers (0 = hardware
// concurrency). Every task writes only its own slot, so results do not depend
// on the number of workers.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& task);

}  // namespace bmfpca
