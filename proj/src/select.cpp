#include "bmfpca/select.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "bmfpca/errors.hpp"

namespace bmfpca {

void SelectionConfig::check() const {
  if (k_min < kMinSplines) throw ConfigError("k_min is below the minimum number of splines");
  if (k_min > k_max) throw ConfigError("k_min exceeds k_max");
  if (l_min < 1 || l_min > l_max) throw ConfigError("need 1 <= l_min <= l_max");
  if (!(pve_threshold > 0.0 && pve_threshold <= 1.0)) {
    throw ConfigError("PVE threshold must lie in (0, 1]");
  }
}

int rule_of_thumb_K(double median_count) {
  const int quarter = static_cast<int>(std::floor(median_count / 4.0));
  return std::max(std::min(quarter, 40), 7);
}

std::vector<int> rule_of_thumb_K(const FunctionalDataset& data) {
  std::vector<int> out;
  for (double m : median_counts(data)) out.push_back(rule_of_thumb_K(m));
  return out;
}

Eigen::VectorXd softmax_probabilities(const std::vector<double>& elbos) {
  if (elbos.empty()) return {};
  const double top = *std::max_element(elbos.begin(), elbos.end());
  Eigen::VectorXd w(static_cast<Eigen::Index>(elbos.size()));
  for (std::size_t k = 0; k < elbos.size(); ++k) w[k] = std::exp(elbos[k] - top);
  return w / w.sum();
}

std::size_t best_candidate(const std::vector<CandidateResult>& results) {
  std::size_t best = results.size();
  for (std::size_t k = 0; k < results.size(); ++k) {
    if (results[k].failed) continue;
    if (best == results.size() || results[k].probability > results[best].probability) best = k;
  }
  if (best == results.size()) throw AlgorithmError("every candidate fit failed");
  return best;
}

std::vector<Candidate> candidate_grid(const std::vector<int>& Ks, const std::vector<int>& Ls) {
  std::vector<Candidate> out;
  for (int K : Ks) {
    for (int L : Ls) out.push_back({K, L});
  }
  return out;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& task) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) task(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          task(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<CandidateResult> model_choice(const FunctionalDataset& data,
                                          const std::vector<Candidate>& candidates,
                                          const Hyperparameters& hyper, Engine engine,
                                          int threads) {
  if (candidates.empty()) throw ConfigError("model choice needs at least one candidate");
  std::vector<CandidateResult> results(candidates.size());
  parallel_for(candidates.size(), threads, [&](std::size_t k) {
    CandidateResult& r = results[k];
    r.candidate = candidates[k];
    Hyperparameters h = hyper;
    h.K = {candidates[k].K};
    h.L = candidates[k].L;
    try {
      const RawFit raw = fit(data, h, engine);
      r.elbo = raw.elbo_trace.back();
      r.converged = raw.converged;
      if (!raw.converged) {
        spdlog::warn("candidate K={} L={} did not converge; using its final ELBO",
                     candidates[k].K, candidates[k].L);
      }
    } catch (const Error& e) {
      r.failed = true;
      r.error = e.what();
    }
  });

  std::vector<double> elbos;
  for (const auto& r : results) {
    if (!r.failed) elbos.push_back(r.elbo);
  }
  if (elbos.empty()) {
    std::ostringstream msg;
    msg << "every model-choice candidate failed:";
    for (const auto& r : results) {
      msg << " [K=" << r.candidate.K << " L=" << r.candidate.L << ": " << r.error << "]";
    }
    throw AlgorithmError(msg.str());
  }
  const Eigen::VectorXd prob = softmax_probabilities(elbos);
  Eigen::Index k = 0;
  for (auto& r : results) {
    if (!r.failed) r.probability = prob[k++];
  }
  return results;
}

int select_L_pve(const Eigen::VectorXd& pve, double threshold) {
  double cum = 0.0;
  for (Eigen::Index l = 0; l < pve.size(); ++l) {
    cum += pve[l];
    // tolerate rounding in the cumulative sum
    if (cum >= threshold - 1e-12) return static_cast<int>(l + 1);
  }
  return static_cast<int>(pve.size());
}

}  // namespace bmfpca
