#include "bmfpca/simulate.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

#include "bmfpca/errors.hpp"
#include "bmfpca/format.hpp"

namespace bmfpca {

void SimulationScenario::check() const {
  if (n < 1 || p < 1) throw ConfigError("scenario needs n >= 1 and p >= 1");
  if (L_true < 1) throw ConfigError("scenario needs L_true >= 1");
  if (family == FunctionFamily::bsplines && L_true > kMaxBsplineComponents) {
    throw ConfigError("the B-spline family supports at most " +
                      std::to_string(kMaxBsplineComponents) + " components");
  }
  if (obs_min < 2 || obs_max < obs_min) throw ConfigError("observation range must satisfy 2 <= min <= max");
  if (!sparse_variables.empty() && (sparse_obs_min < 2 || sparse_obs_max < sparse_obs_min)) {
    throw ConfigError("sparse observation range must satisfy 2 <= min <= max");
  }
  for (int j : sparse_variables) {
    if (j < 0 || j >= p) throw ConfigError("sparse variable index out of range");
  }
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
  if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be non-negative");
}

SimulationScenario scenario_from_json(const nlohmann::json& j) {
  SimulationScenario s;
  try {
    s.n = j.value("n", s.n);
    s.p = j.value("p", s.p);
    s.L_true = j.value("L_true", s.L_true);
    s.obs_min = j.value("obs_min", s.obs_min);
    s.obs_max = j.value("obs_max", s.obs_max);
    const std::string family = j.value("family", std::string("periodic"));
    if (family == "periodic") {
      s.family = FunctionFamily::periodic;
    } else if (family == "bsplines") {
      s.family = FunctionFamily::bsplines;
    } else {
      throw ConfigError("unknown function family '" + family + "'");
    }
    s.alpha = j.value("alpha", s.alpha);
    s.rho = j.value("rho", s.rho);
    s.noise_sd = j.value("noise_sd", s.noise_sd);
    s.sparse_variables = j.value("sparse_variables", s.sparse_variables);
    s.sparse_obs_min = j.value("sparse_obs_min", s.sparse_obs_min);
    s.sparse_obs_max = j.value("sparse_obs_max", s.sparse_obs_max);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid scenario: ") + e.what());
  }
  s.check();
  return s;
}

nlohmann::json scenario_to_json(const SimulationScenario& s) {
  return {{"n", s.n},
          {"p", s.p},
          {"L_true", s.L_true},
          {"obs_min", s.obs_min},
          {"obs_max", s.obs_max},
          {"family", s.family == FunctionFamily::periodic ? "periodic" : "bsplines"},
          {"alpha", s.alpha},
          {"rho", s.rho},
          {"noise_sd", s.noise_sd},
          {"sparse_variables", s.sparse_variables},
          {"sparse_obs_min", s.sparse_obs_min},
          {"sparse_obs_max", s.sparse_obs_max},
          {"seed", s.seed}};
}

SimulationScenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("scenario file " + path.string() + ": " + e.what());
  }
  return scenario_from_json(j);
}

// ---- ground truth ----

namespace {

// Clamped cubic knot vector with interior knots 0.2, 0.4, 0.6, 0.8 (eight
// B-splines).
std::vector<double> truth_knots() {
  std::vector<double> k(4, 0.0);
  for (int m = 1; m <= 4; ++m) k.push_back(0.2 * m);
  k.insert(k.end(), 4, 1.0);
  return k;
}

constexpr int kTruthGrid = kDefaultGridSize;

}  // namespace

GroundTruth::GroundTruth(const SimulationScenario& s)
    : family_(s.family), p_(s.p), L_(s.L_true), noise_sd_(s.noise_sd) {
  score_sd_.resize(L_);
  for (int l = 0; l < L_; ++l) score_sd_[l] = std::pow(l + 1.0, -1.0 / s.alpha);

  if (family_ == FunctionFamily::bsplines) {
    knots_ = truth_knots();
    // Modified Gram-Schmidt of the raw stacked functions under the trapezoid
    // H inner product; gs_ holds the coefficients on the raw functions.
    const Eigen::VectorXd t = grid_times(kTruthGrid);
    const Eigen::VectorXd w = trapezoid_weights(kTruthGrid).replicate(p_, 1);
    Eigen::MatrixXd raw(static_cast<Eigen::Index>(p_) * kTruthGrid, L_);
    for (int l = 0; l < L_; ++l) {
      for (int j = 0; j < p_; ++j) {
        for (int k = 0; k < kTruthGrid; ++k) raw(j * kTruthGrid + k, l) = raw_bspline(l, j, t[k]);
      }
    }
    gs_ = Eigen::MatrixXd::Identity(L_, L_);
    Eigen::MatrixXd q = raw;
    for (int l = 0; l < L_; ++l) {
      for (int m = 0; m < l; ++m) {
        const double c = (w.array() * q.col(l).array() * q.col(m).array()).sum();
        q.col(l) -= c * q.col(m);
        gs_.row(l) -= c * gs_.row(m);
      }
      const double norm = std::sqrt((w.array() * q.col(l).array().square()).sum());
      q.col(l) /= norm;
      gs_.row(l) /= norm;
    }
  }
}

double GroundTruth::raw_bspline(int l, int j, double t) const {
  const int m = static_cast<int>(knots_.size()) - 4;
  return cubic_bspline_derivatives(knots_, t).value[(l + 2 * j) % m];
}

double GroundTruth::mean(int j, double t) const {
  const double jj = j + 1.0;
  const double sign = (j + 1) % 2 == 0 ? 1.0 : -1.0;
  return sign * 2.0 * std::sin((2.0 * std::numbers::pi + jj) * t);
}

double GroundTruth::eigenfunction(int l, int j, double t) const {
  if (family_ == FunctionFamily::periodic) {
    const double sign = (j + 1) % 2 == 0 ? 1.0 : -1.0;
    const double scale = std::sqrt(2.0 / p_);
    const int harmonic = l / 2 + 1;
    const double arg = 2.0 * harmonic * std::numbers::pi * t;
    return sign * scale * (l % 2 == 0 ? std::cos(arg) : std::sin(arg));
  }
  double v = 0.0;
  for (int m = 0; m <= l; ++m) v += gs_(l, m) * raw_bspline(m, j, t);
  return v;
}

Eigen::VectorXd GroundTruth::mean_on_grid(int j, int n_g) const {
  const Eigen::VectorXd t = grid_times(n_g);
  Eigen::VectorXd out(n_g);
  for (int k = 0; k < n_g; ++k) out[k] = mean(j, t[k]);
  return out;
}

Eigen::VectorXd GroundTruth::eigenfunction_on_grid(int l, int n_g) const {
  const Eigen::VectorXd t = grid_times(n_g);
  Eigen::VectorXd out(static_cast<Eigen::Index>(p_) * n_g);
  for (int j = 0; j < p_; ++j) {
    for (int k = 0; k < n_g; ++k) out[j * n_g + k] = eigenfunction(l, j, t[k]);
  }
  return out;
}

std::pair<FunctionalDataset, GroundTruth> generate_dataset(const SimulationScenario& s) {
  s.check();
  GroundTruth truth(s);
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  truth.scores = Eigen::MatrixXd::Zero(s.n, s.L_true);
  truth.variable_scores.assign(s.p, Eigen::MatrixXd::Zero(s.n, s.L_true));
  for (int i = 0; i < s.n; ++i) {
    for (int l = 0; l < s.L_true; ++l) {
      const double sd = truth.score_sd()[l];
      if (s.rho >= 1.0) {
        const double z = sd * normal(rng);
        truth.scores(i, l) = z;
        for (int j = 0; j < s.p; ++j) truth.variable_scores[j](i, l) = z;
      } else {
        const double u = normal(rng);
        double sum = 0.0;
        for (int j = 0; j < s.p; ++j) {
          const double z = sd * (std::sqrt(s.rho) * u + std::sqrt(1.0 - s.rho) * normal(rng));
          truth.variable_scores[j](i, l) = z;
          sum += z;
        }
        truth.scores(i, l) = sum / s.p;
      }
    }
  }

  const std::set<int> sparse(s.sparse_variables.begin(), s.sparse_variables.end());
  std::vector<std::vector<Series>> series(s.n, std::vector<Series>(s.p));
  for (int i = 0; i < s.n; ++i) {
    for (int j = 0; j < s.p; ++j) {
      const bool is_sparse = sparse.count(j) > 0;
      std::uniform_int_distribution<int> count_dist(is_sparse ? s.sparse_obs_min : s.obs_min,
                                                    is_sparse ? s.sparse_obs_max : s.obs_max);
      const int count = count_dist(rng);
      std::vector<double> times;
      while (static_cast<int>(times.size()) < count) {
        const double t = uniform(rng);
        if (std::find(times.begin(), times.end(), t) == times.end()) times.push_back(t);
      }
      std::sort(times.begin(), times.end());
      Series& ser = series[i][j];
      ser.times = Eigen::Map<const Eigen::VectorXd>(times.data(), count);
      ser.values.resize(count);
      for (int k = 0; k < count; ++k) {
        double v = truth.mean(j, times[k]);
        for (int l = 0; l < s.L_true; ++l) {
          v += truth.variable_scores[j](i, l) * truth.eigenfunction(l, j, times[k]);
        }
        ser.values[k] = v + s.noise_sd * normal(rng);
      }
    }
  }

  std::vector<std::string> subjects;
  std::vector<std::string> variables;
  const int width = static_cast<int>(std::to_string(s.n).size());
  for (int i = 0; i < s.n; ++i) {
    std::string id = std::to_string(i + 1);
    subjects.push_back("s" + std::string(width - id.size(), '0') + id);
  }
  for (int j = 0; j < s.p; ++j) variables.push_back("var" + std::to_string(j + 1));
  FunctionalDataset data(std::move(subjects), std::move(variables), std::move(series));
  return {std::move(data), std::move(truth)};
}

// ---- metrics ----

ComponentAlignment align_components(const Eigen::MatrixXd& estimated,
                                    const Eigen::MatrixXd& truth) {
  if (estimated.rows() != truth.rows()) throw ShapeError("score matrices differ in subjects");
  const Eigen::Index lt = truth.cols();
  const Eigen::Index le = estimated.cols();
  auto centered = [](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
    for (Eigen::Index k = 0; k < c.cols(); ++k) {
      const double norm = c.col(k).norm();
      if (norm > 0.0) c.col(k) /= norm;
    }
    return c;
  };
  const Eigen::MatrixXd corr = centered(truth).transpose() * centered(estimated);

  ComponentAlignment out;
  out.index.assign(lt, -1);
  out.sign.assign(lt, 1.0);
  std::vector<bool> used_t(lt, false), used_e(le, false);
  for (Eigen::Index step = 0; step < std::min(lt, le); ++step) {
    double best = -1.0;
    Eigen::Index bt = -1, be = -1;
    for (Eigen::Index a = 0; a < lt; ++a) {
      if (used_t[a]) continue;
      for (Eigen::Index b = 0; b < le; ++b) {
        if (used_e[b]) continue;
        if (std::abs(corr(a, b)) > best) {
          best = std::abs(corr(a, b));
          bt = a;
          be = b;
        }
      }
    }
    used_t[bt] = true;
    used_e[be] = true;
    out.index[bt] = static_cast<int>(be);
    out.sign[bt] = corr(bt, be) < 0.0 ? -1.0 : 1.0;
  }
  return out;
}

Eigen::VectorXd rmse_scores(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth) {
  if (estimated.rows() != truth.rows() || estimated.cols() != truth.cols()) {
    throw ShapeError("rmse_scores: shape mismatch");
  }
  return ((estimated - truth).array().square().colwise().mean()).sqrt().transpose();
}

double ise(const Eigen::VectorXd& estimated, const Eigen::VectorXd& truth, int n_g) {
  if (estimated.size() != truth.size()) throw ShapeError("ise: shape mismatch");
  const Eigen::Index p = estimated.size() / n_g;
  if (p * n_g != estimated.size()) throw ShapeError("ise: length is not a multiple of the grid");
  const Eigen::VectorXd diff = estimated - truth;
  return h_inner(diff, diff, n_g) / static_cast<double>(p);
}

// ---- replicate studies ----

std::uint64_t replicate_seed(std::uint64_t seed, int replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

constexpr double kZ975 = 1.959963984540054;

struct MethodFit {
  OrthonormalizedFit fit;
  int iterations = 0;
  bool converged = false;
};

MethodFit fit_one(const FunctionalDataset& data, const ReplicateOptions& opt) {
  Hyperparameters h = opt.hyper;
  h.L = opt.L_max;
  if (opt.k_strategy == KStrategy::rule_of_thumb) {
    h.K = rule_of_thumb_K(data);
  } else {
    std::vector<Candidate> cands;
    for (int K : opt.k_candidates) cands.push_back({K, opt.L_max});
    const auto res = model_choice(data, cands, h, opt.engine, 1);
    h.K = {res[best_candidate(res)].candidate.K};
  }
  const RawFit raw = fit(data, h, opt.engine);
  return {orthonormalize(raw, opt.grid_size), raw.iterations, raw.converged};
}

void score_rows(std::vector<ReplicateRow>& rows, ReplicateRow base, const MethodFit& mf,
                const GroundTruth& truth, const Eigen::MatrixXd& true_scores, int variable,
                double rescale, double pve_threshold, int n_g) {
  const OrthonormalizedFit& f = mf.fit;
  base.selected_L = select_L_pve(pve(f), pve_threshold);
  base.iterations = mf.iterations;
  base.converged = mf.converged;
  base.variable = variable;

  const Eigen::MatrixXd est = f.scores * rescale;

  // mean function
  ReplicateRow mean_row = base;
  mean_row.component = 0;
  mean_row.rmse = std::numeric_limits<double>::quiet_NaN();
  mean_row.coverage = std::numeric_limits<double>::quiet_NaN();
  mean_row.mean_width = std::numeric_limits<double>::quiet_NaN();
  if (variable < 0) {
    double total = 0.0;
    for (int j = 0; j < truth.p(); ++j) total += ise(f.mean[j], truth.mean_on_grid(j, n_g), n_g);
    mean_row.ise = total / truth.p();
  } else {
    mean_row.ise = ise(f.mean[0], truth.mean_on_grid(variable, n_g), n_g);
  }
  rows.push_back(mean_row);

  const ComponentAlignment al = align_components(est, true_scores);
  for (int l = 0; l < truth.L(); ++l) {
    ReplicateRow row = base;
    row.component = l + 1;
    const int k = al.index[l];
    if (k < 0) {
      row.rmse = row.ise = row.coverage = row.mean_width = std::numeric_limits<double>::quiet_NaN();
      rows.push_back(row);
      continue;
    }
    const double sign = al.sign[l];
    const Eigen::VectorXd s = sign * est.col(k);
    row.rmse = std::sqrt((s - true_scores.col(l)).array().square().mean());

    Eigen::VectorXd psi_true = truth.eigenfunction_on_grid(l, n_g);
    if (variable >= 0) {
      psi_true = psi_true.segment(static_cast<Eigen::Index>(variable) * n_g, n_g).eval();
      psi_true /= h_norm(psi_true, n_g);
    }
    row.ise = ise(sign * f.eigenfunctions.col(k), psi_true, n_g);

    int covered = 0;
    double width = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double sd = rescale * std::sqrt(f.score_cov[i](k, k));
      if (std::abs(s[i] - true_scores(i, l)) <= kZ975 * sd) ++covered;
      width += 2.0 * kZ975 * sd;
    }
    row.coverage = static_cast<double>(covered) / static_cast<double>(s.size());
    row.mean_width = width / static_cast<double>(s.size());
    rows.push_back(row);
  }
}

std::vector<ReplicateRow> one_replicate(const SimulationScenario& scenario,
                                        const ReplicateOptions& opt, int r) {
  SimulationScenario sc = scenario;
  sc.seed = replicate_seed(scenario.seed, r);
  const auto [data, truth] = generate_dataset(sc);
  std::vector<ReplicateRow> rows;
  ReplicateRow base;
  base.replicate = r;

  auto timed = [&](auto&& body, ReplicateRow b) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t first = rows.size();
    try {
      body(b);
    } catch (const Error& e) {
      b.error = e.what();
      b.rmse = b.ise = b.coverage = b.mean_width = std::numeric_limits<double>::quiet_NaN();
      rows.push_back(b);
      spdlog::warn("replicate {} ({}): {}", r, b.method, e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (std::size_t k = first; k < rows.size(); ++k) rows[k].runtime = secs;
  };

  if (opt.multivariate) {
    base.method = "mfpca";
    timed(
        [&](ReplicateRow b) {
          const MethodFit mf = fit_one(data, opt);
          score_rows(rows, b, mf, truth, truth.scores, -1, 1.0, opt.pve_threshold,
                     opt.grid_size);
        },
        base);
  }
  if (opt.univariate) {
    std::vector<int> vars = opt.univariate_variables;
    if (vars.empty()) {
      for (int j = 0; j < scenario.p; ++j) vars.push_back(j);
    }
    base.method = "ufpca";
    const double rescale = std::sqrt(static_cast<double>(scenario.p));
    for (int j : vars) {
      base.variable = j;
      timed(
          [&](ReplicateRow b) {
            const MethodFit mf = fit_one(data.select_variable(j), opt);
            score_rows(rows, b, mf, truth, truth.variable_scores[j], j, rescale,
                       opt.pve_threshold, opt.grid_size);
          },
          base);
    }
  }
  return rows;
}

}  // namespace

std::vector<ReplicateRow> run_replicates(const SimulationScenario& scenario,
                                         const ReplicateOptions& options) {
  scenario.check();
  if (options.replicates < 1) throw ConfigError("need at least one replicate");
  std::vector<std::vector<ReplicateRow>> per(options.replicates);
  parallel_for(per.size(), options.threads, [&](std::size_t r) {
    per[r] = one_replicate(scenario, options, static_cast<int>(r));
  });
  std::vector<ReplicateRow> rows;
  for (auto& v : per) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

void write_replicates_csv(const std::vector<ReplicateRow>& rows,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "replicate,method,variable,component,rmse,ise,selected_L,coverage,mean_width,"
         "runtime,iterations,converged,error\n";
  for (const auto& r : rows) {
    out << r.replicate << ',' << r.method << ',' << (r.variable < 0 ? std::string("all") : std::to_string(r.variable + 1))
        << ',' << r.component << ',' << format_double(r.rmse) << ',' << format_double(r.ise)
        << ',' << r.selected_L << ',' << format_double(r.coverage) << ','
        << format_double(r.mean_width) << ',' << format_double(r.runtime) << ','
        << r.iterations << ',' << (r.converged ? 1 : 0) << ',' << csv_field(r.error) << '\n';
  }
}

void write_truth_csv(const GroundTruth& truth, int n_g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  const Eigen::VectorXd t = grid_times(n_g);
  out << "variable,t,mean";
  for (int l = 0; l < truth.L(); ++l) out << ",psi_" << l + 1;
  out << '\n';
  for (int j = 0; j < truth.p(); ++j) {
    for (int k = 0; k < n_g; ++k) {
      out << j + 1 << ',' << format_double(t[k]) << ',' << format_double(truth.mean(j, t[k]));
      for (int l = 0; l < truth.L(); ++l) out << ',' << format_double(truth.eigenfunction(l, j, t[k]));
      out << '\n';
    }
  }
}

void write_true_scores_csv(const FunctionalDataset& data, const GroundTruth& truth,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "subject";
  for (int l = 0; l < truth.L(); ++l) out << ",zeta_" << l + 1;
  out << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    out << csv_field(data.subject_ids()[i]);
    for (int l = 0; l < truth.L(); ++l) out << ',' << format_double(truth.scores(i, l));
    out << '\n';
  }
}

}  // namespace bmfpca
