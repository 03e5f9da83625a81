#include "bmfpca/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "bmfpca/dataset.hpp"
#include "bmfpca/engines.hpp"
#include "bmfpca/errors.hpp"
#include "bmfpca/format.hpp"
#include "bmfpca/postprocess.hpp"
#include "bmfpca/select.hpp"
#include "bmfpca/simulate.hpp"

namespace bmfpca::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kFitFormatVersion = 1;

// ---- option groups -----------------------------------------------------

struct DataOptions {
  std::string input;
  LongCsvConfig csv;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("input", o.input, "long-format CSV (subject, variable, time, value)")
      ->required();
  cmd->add_option("--col-subject", o.csv.col_subject, "subject column name");
  cmd->add_option("--col-variable", o.csv.col_variable, "variable column name");
  cmd->add_option("--col-time", o.csv.col_time, "time column name");
  cmd->add_option("--col-value", o.csv.col_value, "value column name");
}

struct ModelOptions {
  std::string engine = "mfvb";
  int num_components = 10;
  std::vector<int> num_splines;
  std::string select_k = "auto";
  int k_min = 5;
  int k_max = 20;
  int k_step = 1;
  double tol = 1e-5;
  int max_iter = 500;
  std::uint64_t seed = 1;
  int threads = 1;
  bool threads_given = false;
};

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option("--engine", o.engine, "mfvb or vmp")->check(CLI::IsMember({"mfvb", "vmp"}));
  cmd->add_option("--num-components", o.num_components, "number of latent functions (L_max)");
  cmd->add_option("--num-splines", o.num_splines,
                  "spline count K, one value or one per variable (comma separated)")
      ->delimiter(',');
  cmd->add_option("--select-k", o.select_k,
                  "rule, model, or auto (model when --threads is given, else rule)")
      ->check(CLI::IsMember({"auto", "rule", "model"}));
  cmd->add_option("--k-min", o.k_min, "smallest K for model choice");
  cmd->add_option("--k-max", o.k_max, "largest K for model choice");
  cmd->add_option("--k-step", o.k_step, "K increment for model choice");
  cmd->add_option("--tol", o.tol, "relative ELBO tolerance");
  cmd->add_option("--max-iter", o.max_iter, "maximum number of sweeps");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--threads", o.threads, "worker threads, 0 = hardware concurrency");
}

Hyperparameters base_hyper(const ModelOptions& o) {
  Hyperparameters h;
  h.L = o.num_components;
  h.tau = o.tol;
  h.max_iter = o.max_iter;
  h.seed = o.seed;
  return h;
}

std::vector<int> k_range(const ModelOptions& o) {
  if (o.k_min < kMinSplines || o.k_max < o.k_min || o.k_step < 1) {
    throw ConfigError("invalid K range [" + std::to_string(o.k_min) + ", " +
                      std::to_string(o.k_max) + "] step " + std::to_string(o.k_step) +
                      "; K must be at least " + std::to_string(kMinSplines));
  }
  std::vector<int> ks;
  for (int k = o.k_min; k <= o.k_max; k += o.k_step) ks.push_back(k);
  return ks;
}

// ---- output helpers ----------------------------------------------------

class OutputDir {
 public:
  explicit OutputDir(const std::string& dir) : root_(dir) {
    if (dir.empty()) throw ConfigError("--out is required");
    fs::create_directories(root_);
  }

  std::ofstream open(const std::string& name) {
    std::ofstream out(root_ / name);
    if (!out) throw ConfigError("cannot write " + (root_ / name).string());
    written_.push_back(name);
    return out;
  }

  void write_json(const std::string& name, const json& value) {
    auto out = open(name);
    out << value.dump(2) << '\n';
  }

  // Writes manifest.json listing every file produced so far.
  void write_manifest(json manifest) {
    manifest["outputs"] = written_;
    std::ofstream out(root_ / "manifest.json");
    if (!out) throw ConfigError("cannot write manifest in " + root_.string());
    out << manifest.dump(2) << '\n';
  }

  // Path for a file written by a library routine; listed in the manifest.
  fs::path external(const std::string& name) {
    written_.push_back(name);
    return root_ / name;
  }

 private:
  fs::path root_;
  std::vector<std::string> written_;
};

json manifest_base(const std::string& command, const std::vector<std::string>& args) {
  json m;
  m["command"] = command;
  m["arguments"] = args;
  m["versions"] = {{"bmfpca", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                 std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)}};
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json to_json(const GaussianNatural& g) { return {{"eta1", to_json(g.eta1)}, {"eta2", to_json(g.eta2)}}; }
json to_json(const InvChiSqNatural& g) { return json::array({g.eta1, g.eta2}); }

GaussianNatural gaussian_from_json(const json& j, GaussianForm form) {
  GaussianNatural g;
  g.eta1 = vector_from_json(j.at("eta1"));
  g.eta2 = vector_from_json(j.at("eta2"));
  g.form = form;
  return g;
}

std::string sanitize(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return out;
}

// ---- fit ---------------------------------------------------------------

struct FitOptions {
  DataOptions data;
  ModelOptions model;
  double pve_threshold = 0.95;
  int grid_size = kDefaultGridSize;
  std::string out;
  bool allow_nonconverged = false;
};

// Resolves K per the options; model choice runs over the K range at L_max.
std::vector<int> resolve_K(const FunctionalDataset& data, const ModelOptions& o,
                           const Hyperparameters& hyper, Engine engine, json& echo) {
  if (!o.num_splines.empty()) {
    echo["k_strategy"] = "fixed";
    return o.num_splines;
  }
  std::string strategy = o.select_k;
  if (strategy == "auto") strategy = (o.threads_given && o.threads != 1) ? "model" : "rule";
  echo["k_strategy"] = strategy;
  if (strategy == "rule") return rule_of_thumb_K(data);

  std::vector<Candidate> cands;
  for (int K : k_range(o)) cands.push_back({K, hyper.L});
  const auto res = model_choice(data, cands, hyper, engine, o.threads);
  const Candidate best = res[best_candidate(res)].candidate;
  spdlog::info("model choice selected K = {}", best.K);
  json table = json::array();
  for (const auto& r : res) {
    table.push_back({{"K", r.candidate.K}, {"elbo", r.elbo}, {"posterior_prob", r.probability},
                     {"converged", r.converged}});
  }
  echo["k_model_choice"] = table;
  return {best.K};
}

json fit_document(const RawFit& raw, const FunctionalDataset& data, int grid_size) {
  json doc;
  doc["format"] = "bmfpca-fit";
  doc["version"] = kFitFormatVersion;
  doc["engine"] = to_string(raw.engine);
  doc["K"] = raw.dims.K;
  doc["L"] = raw.dims.L;
  doc["grid_size"] = grid_size;
  doc["seed"] = raw.hyper.seed;
  doc["hyper"] = {{"sigma_beta", raw.hyper.sigma_beta}, {"A", raw.hyper.A},
                  {"tau", raw.hyper.tau}, {"max_iter", raw.hyper.max_iter}};
  doc["time_range"] = {data.time_range().min, data.time_range().max};
  doc["subject_ids"] = data.subject_ids();
  doc["variable_names"] = data.variable_names();
  doc["dataset_fingerprint"] = raw.dataset_fingerprint;
  doc["converged"] = raw.converged;
  doc["iterations"] = raw.iterations;
  doc["elbo_trace"] = raw.elbo_trace;

  const VariationalState& s = raw.state;
  json state;
  for (const auto& g : s.nu) state["nu"].push_back(to_json(g));
  for (const auto& g : s.zeta) state["zeta"].push_back(to_json(g));
  for (std::size_t j = 0; j < s.sigma_eps.size(); ++j) {
    state["sigma_eps"].push_back(to_json(s.sigma_eps[j]));
    state["a_eps"].push_back(to_json(s.a_eps[j]));
    state["sigma_mu"].push_back(to_json(s.sigma_mu[j]));
    state["a_mu"].push_back(to_json(s.a_mu[j]));
    json sp = json::array(), ap = json::array();
    for (std::size_t l = 0; l < s.sigma_psi[j].size(); ++l) {
      sp.push_back(to_json(s.sigma_psi[j][l]));
      ap.push_back(to_json(s.a_psi[j][l]));
    }
    state["sigma_psi"].push_back(sp);
    state["a_psi"].push_back(ap);
  }
  doc["state"] = state;
  return doc;
}

void write_fit_outputs(OutputDir& out, const RawFit& raw, const OrthonormalizedFit& f,
                       const FunctionalDataset& data, double pve_threshold) {
  const int n_g = f.grid_size();
  const int L = f.num_components();
  const auto& names = data.variable_names();

  {
    auto csv = out.open("mean.csv");
    csv << "variable,t,mean\n";
    for (int j = 0; j < f.num_variables(); ++j) {
      for (int g = 0; g < n_g; ++g) {
        csv << csv_field(names[j]) << ',' << format_double(f.times[g]) << ','
            << format_double(f.mean[j][g]) << '\n';
      }
    }
  }
  {
    auto csv = out.open("eigenfunctions.csv");
    csv << "variable,t,mean";
    for (int l = 1; l <= L; ++l) csv << ",psi_" << l;
    csv << '\n';
    for (int j = 0; j < f.num_variables(); ++j) {
      for (int g = 0; g < n_g; ++g) {
        csv << csv_field(names[j]) << ',' << format_double(f.times[g]) << ','
            << format_double(f.mean[j][g]);
        for (int l = 0; l < L; ++l) {
          csv << ',' << format_double(f.eigenfunctions(static_cast<Eigen::Index>(j) * n_g + g, l));
        }
        csv << '\n';
      }
    }
  }
  {
    auto csv = out.open("scores.csv");
    csv << "subject";
    for (int l = 1; l <= L; ++l) csv << ",zeta_" << l;
    for (int l = 1; l <= L; ++l) csv << ",sd_" << l;
    csv << '\n';
    for (std::size_t i = 0; i < data.n(); ++i) {
      csv << csv_field(data.subject_ids()[i]);
      for (int l = 0; l < L; ++l) csv << ',' << format_double(f.scores(i, l));
      const Eigen::VectorXd sd = f.score_sd(i);
      for (int l = 0; l < L; ++l) csv << ',' << format_double(sd[l]);
      csv << '\n';
    }
  }
  {
    auto csv = out.open("elbo_trace.csv");
    csv << "iteration,elbo\n";
    for (std::size_t k = 0; k < raw.elbo_trace.size(); ++k) {
      csv << k + 1 << ',' << format_double(raw.elbo_trace[k]) << '\n';
    }
  }
  const Eigen::VectorXd shares = pve(f);
  Eigen::VectorXd cumulative = shares;
  for (Eigen::Index l = 1; l < cumulative.size(); ++l) cumulative[l] += cumulative[l - 1];
  out.write_json("pve.json", {{"eigenvalues", to_json(f.eigenvalues)},
                              {"pve", to_json(shares)},
                              {"cumulative_pve", to_json(cumulative)},
                              {"threshold", pve_threshold},
                              {"selected_L", select_L_pve(shares, pve_threshold)},
                              {"near_zero", f.near_zero}});
}

int cmd_fit(const FitOptions& o, const std::vector<std::string>& args) {
  const auto start = std::chrono::steady_clock::now();
  if (o.pve_threshold <= 0.0 || o.pve_threshold > 1.0) {
    throw ConfigError("--pve-threshold must lie in (0, 1]");
  }
  if (o.grid_size < 2) throw ConfigError("--grid-size must be at least 2");
  const Engine engine = parse_engine(o.model.engine);
  Hyperparameters hyper = base_hyper(o.model);
  for (int k : o.model.num_splines) {
    if (k < kMinSplines) {
      throw ConfigError("--num-splines " + std::to_string(k) + " is below the minimum of " +
                        std::to_string(kMinSplines));
    }
  }
  hyper.check();
  OutputDir out(o.out);

  const FunctionalDataset data = load_long_csv(o.data.input, o.data.csv);
  json echo;
  hyper.K = resolve_K(data, o.model, hyper, engine, echo);
  const RawFit raw = fit(data, hyper, engine);

  json manifest = manifest_base("fit", args);
  echo.update({{"engine", to_string(engine)},
               {"num_components", hyper.L},
               {"num_splines", raw.dims.K},
               {"pve_threshold", o.pve_threshold},
               {"grid_size", o.grid_size},
               {"tol", hyper.tau},
               {"max_iter", hyper.max_iter},
               {"sigma_beta", hyper.sigma_beta},
               {"A", hyper.A},
               {"allow_nonconverged", o.allow_nonconverged}});
  manifest["config"] = echo;
  manifest["seed"] = hyper.seed;
  manifest["inputs"] = {{"path", o.data.input}, {"fingerprint", dataset_fingerprint(data)},
                        {"n", data.n()}, {"p", data.p()}};
  manifest["result"] = {{"converged", raw.converged}, {"iterations", raw.iterations},
                        {"final_elbo", raw.elbo_trace.empty() ? 0.0 : raw.elbo_trace.back()}};

  if (!raw.converged && !o.allow_nonconverged) {
    spdlog::error("fit did not converge in {} sweeps; rerun with --allow-nonconverged to keep "
                  "the outputs",
                  raw.iterations);
    manifest["timings"] = {{"total_seconds", seconds_since(start)}};
    out.write_manifest(manifest);
    return kNotConverged;
  }

  const OrthonormalizedFit f = orthonormalize(raw, o.grid_size);
  write_fit_outputs(out, raw, f, data, o.pve_threshold);
  out.write_json("fit.json", fit_document(raw, data, o.grid_size));
  manifest["timings"] = {{"total_seconds", seconds_since(start)}};
  out.write_manifest(manifest);
  return raw.converged ? kOk : kNotConverged;
}

// ---- select ------------------------------------------------------------

struct SelectOptions {
  DataOptions data;
  ModelOptions model;
  int l_min = 1;
  double pve_threshold = 0.95;
  int grid_size = kDefaultGridSize;
  std::string out;
};

int cmd_select(const SelectOptions& o, const std::vector<std::string>& args) {
  const auto start = std::chrono::steady_clock::now();
  const Engine engine = parse_engine(o.model.engine);
  Hyperparameters hyper = base_hyper(o.model);
  if (o.l_min < 1 || o.l_min > hyper.L) throw ConfigError("need 1 <= --l-min <= --num-components");
  std::vector<int> ks = o.model.num_splines.empty() ? k_range(o.model) : o.model.num_splines;
  for (int k : ks) {
    if (k < kMinSplines) throw ConfigError("K values must be at least " + std::to_string(kMinSplines));
  }
  std::vector<int> ls;
  for (int l = o.l_min; l <= hyper.L; ++l) ls.push_back(l);
  hyper.check();
  OutputDir out(o.out);

  const FunctionalDataset data = load_long_csv(o.data.input, o.data.csv);
  const auto res = model_choice(data, candidate_grid(ks, ls), hyper, engine, o.model.threads);
  {
    auto csv = out.open("selection.csv");
    csv << "K,L,elbo,posterior_prob,converged\n";
    for (const auto& r : res) {
      csv << r.candidate.K << ',' << r.candidate.L << ','
          << (r.failed ? std::string("NA") : format_double(r.elbo)) << ','
          << format_double(r.probability) << ',' << (r.converged ? 1 : 0) << '\n';
    }
  }

  // Scree for the L_max fit at the K most probable among the L_max candidates.
  std::vector<CandidateResult> at_lmax;
  for (const auto& r : res) {
    if (r.candidate.L == hyper.L) at_lmax.push_back(r);
  }
  Hyperparameters h = hyper;
  h.K = {at_lmax[best_candidate(at_lmax)].candidate.K};
  const OrthonormalizedFit f = orthonormalize(fit(data, h, engine), o.grid_size);
  const Eigen::VectorXd shares = pve(f);
  {
    auto csv = out.open("scree.csv");
    csv << "component,eigenvalue,pve,cumulative_pve\n";
    double cum = 0.0;
    for (Eigen::Index l = 0; l < shares.size(); ++l) {
      cum += shares[l];
      csv << l + 1 << ',' << format_double(f.eigenvalues[l]) << ',' << format_double(shares[l])
          << ',' << format_double(cum) << '\n';
    }
  }

  const std::size_t best = best_candidate(res);
  json manifest = manifest_base("select", args);
  manifest["config"] = {{"engine", to_string(engine)}, {"K", ks}, {"L", ls},
                        {"pve_threshold", o.pve_threshold}, {"grid_size", o.grid_size},
                        {"tol", hyper.tau}, {"max_iter", hyper.max_iter}};
  manifest["seed"] = hyper.seed;
  manifest["inputs"] = {{"path", o.data.input}, {"fingerprint", dataset_fingerprint(data)}};
  manifest["result"] = {{"best_K", res[best].candidate.K},
                        {"best_L", res[best].candidate.L},
                        {"scree_K", h.K[0]},
                        {"pve_selected_L", select_L_pve(shares, o.pve_threshold)}};
  manifest["timings"] = {{"total_seconds", seconds_since(start)}};
  out.write_manifest(manifest);
  return kOk;
}

// ---- predict -----------------------------------------------------------

struct PredictOptions {
  std::string fit_dir;
  std::vector<std::string> subjects = {"all"};
  int grid_size = 0;
  int samples = kPredictionSamples;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_predict(const PredictOptions& o, const std::vector<std::string>& args) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path fit_path = fs::path(o.fit_dir) / "fit.json";
  std::ifstream in(fit_path);
  if (!in) throw ConfigError("cannot read " + fit_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(fit_path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "bmfpca-fit" || doc.value("version", 0) != kFitFormatVersion) {
    throw ParseError(fit_path.string() + " is not a version " +
                     std::to_string(kFitFormatVersion) + " fit file");
  }

  const auto ids = doc.at("subject_ids").get<std::vector<std::string>>();
  const auto names = doc.at("variable_names").get<std::vector<std::string>>();
  VariationalState state;
  for (const auto& g : doc.at("state").at("nu")) state.nu.push_back(gaussian_from_json(g, GaussianForm::vec));
  for (const auto& g : doc.at("state").at("zeta")) {
    state.zeta.push_back(gaussian_from_json(g, GaussianForm::vech));
  }
  const auto bases = build_bases(doc.at("K").get<std::vector<int>>());

  std::vector<std::size_t> chosen;
  if (o.subjects.size() == 1 && o.subjects[0] == "all") {
    for (std::size_t i = 0; i < ids.size(); ++i) chosen.push_back(i);
  } else {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
    for (const auto& s : o.subjects) {
      const auto it = index.find(s);
      if (it == index.end()) {
        std::string valid;
        for (const auto& id : ids) valid += (valid.empty() ? "" : ", ") + id;
        throw ValidationError("unknown subject '" + s + "'; valid ids: " + valid);
      }
      chosen.push_back(it->second);
    }
  }

  const int n_g = o.grid_size > 0 ? o.grid_size : doc.value("grid_size", kDefaultGridSize);
  const Eigen::VectorXd times = grid_times(n_g);
  const std::uint64_t seed = o.seed.value_or(doc.value("seed", std::uint64_t{1}));
  OutputDir out(o.out);

  std::vector<std::vector<Trajectory>> results(chosen.size());
  parallel_for(chosen.size(), 1, [&](std::size_t k) {
    results[k] = predict_trajectory(state, bases, chosen[k], times, seed, o.samples);
  });
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    auto csv = out.open("predict_" + sanitize(ids[chosen[k]]) + ".csv");
    csv << "variable,t,estimate,lo95,hi95\n";
    for (std::size_t j = 0; j < results[k].size(); ++j) {
      const Trajectory& tr = results[k][j];
      for (Eigen::Index g = 0; g < tr.times.size(); ++g) {
        csv << csv_field(names[j]) << ',' << format_double(tr.times[g]) << ','
            << format_double(tr.estimate[g]) << ',' << format_double(tr.lower[g]) << ','
            << format_double(tr.upper[g]) << '\n';
      }
    }
  }

  json manifest = manifest_base("predict", args);
  manifest["config"] = {{"grid_size", n_g}, {"samples", o.samples}, {"subjects", o.subjects}};
  manifest["seed"] = seed;
  manifest["inputs"] = {{"fit", fit_path.string()},
                        {"fingerprint", doc.value("dataset_fingerprint", "")}};
  manifest["timings"] = {{"total_seconds", seconds_since(start)}};
  out.write_manifest(manifest);
  return kOk;
}

// ---- simulate / bench --------------------------------------------------

struct SimulateOptions {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  int grid_size = kDefaultGridSize;
  std::string out;
};

SimulationScenario read_scenario(const std::string& path, std::optional<std::uint64_t> seed) {
  SimulationScenario sc = load_scenario(path);
  if (seed) sc.seed = *seed;
  sc.check();
  return sc;
}

int cmd_simulate(const SimulateOptions& o, const std::vector<std::string>& args) {
  const auto start = std::chrono::steady_clock::now();
  const SimulationScenario sc = read_scenario(o.scenario, o.seed);
  if (o.grid_size < 2) throw ConfigError("--grid-size must be at least 2");
  OutputDir out(o.out);
  const auto [data, truth] = generate_dataset(sc);

  write_long_csv(data, out.external("data.csv"));
  write_truth_csv(truth, o.grid_size, out.external("truth.csv"));
  write_true_scores_csv(data, truth, out.external("true_scores.csv"));
  out.write_json("scenario.json", scenario_to_json(sc));

  json manifest = manifest_base("simulate", args);
  manifest["config"] = scenario_to_json(sc);
  manifest["seed"] = sc.seed;
  manifest["inputs"] = {{"scenario", o.scenario}};
  manifest["result"] = {{"fingerprint", dataset_fingerprint(data)},
                        {"rows", data.total_count()}};
  manifest["timings"] = {{"total_seconds", seconds_since(start)}};
  out.write_manifest(manifest);
  return kOk;
}

struct BenchOptions {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  int replicates = 1;
  std::string engine = "mfvb";
  int num_components = 10;
  std::string select_k = "rule";
  std::vector<int> k_candidates = {5, 10, 15, 20};
  double pve_threshold = 0.95;
  int grid_size = kDefaultGridSize;
  bool univariate = false;
  bool no_multivariate = false;
  std::vector<int> univariate_variables;
  double tol = 1e-5;
  int max_iter = 500;
  int threads = 1;
  std::string out;
};

int cmd_bench(const BenchOptions& o, const std::vector<std::string>& args) {
  const auto start = std::chrono::steady_clock::now();
  const SimulationScenario sc = read_scenario(o.scenario, o.seed);
  ReplicateOptions ro;
  ro.replicates = o.replicates;
  ro.engine = parse_engine(o.engine);
  ro.L_max = o.num_components;
  ro.k_strategy = o.select_k == "model" ? KStrategy::model_choice : KStrategy::rule_of_thumb;
  ro.k_candidates = o.k_candidates;
  ro.pve_threshold = o.pve_threshold;
  ro.grid_size = o.grid_size;
  ro.multivariate = !o.no_multivariate;
  ro.univariate = o.univariate;
  // variables are 1-based on the command line
  for (int v : o.univariate_variables) {
    if (v < 1 || v > sc.p) throw ConfigError("--univariate-variables out of range");
    ro.univariate_variables.push_back(v - 1);
  }
  ro.hyper.tau = o.tol;
  ro.hyper.max_iter = o.max_iter;
  ro.threads = o.threads;
  ro.hyper.L = o.num_components;
  ro.hyper.check();
  OutputDir out(o.out);

  const auto rows = run_replicates(sc, ro);
  write_replicates_csv(rows, out.external("results.csv"));

  json manifest = manifest_base("bench", args);
  manifest["config"] = {{"scenario", scenario_to_json(sc)}, {"replicates", o.replicates},
                        {"engine", o.engine}, {"num_components", o.num_components},
                        {"select_k", o.select_k}, {"k_candidates", o.k_candidates},
                        {"pve_threshold", o.pve_threshold}, {"grid_size", o.grid_size},
                        {"univariate", o.univariate}, {"multivariate", ro.multivariate},
                        {"tol", o.tol}, {"max_iter", o.max_iter}};
  manifest["seed"] = sc.seed;
  manifest["inputs"] = {{"scenario", o.scenario}};
  manifest["timings"] = {{"total_seconds", seconds_since(start)}};
  out.write_manifest(manifest);
  return kOk;
}

// Maps library exceptions onto the exit-code contract.
template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const NumericalError& e) {
    spdlog::error("{}", e.what());
    return kNumerical;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kInvalid;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kInvalid;
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Bayesian multivariate FPCA for sparse, irregularly sampled curves", "bmfpca"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "errors only");

  FitOptions fo;
  auto* fit_cmd = app.add_subcommand("fit", "fit the model and export orthonormalised components");
  add_data_options(fit_cmd, fo.data);
  add_model_options(fit_cmd, fo.model);
  fit_cmd->add_option("--pve-threshold", fo.pve_threshold, "cumulative PVE threshold for L");
  fit_cmd->add_option("--grid-size", fo.grid_size, "evaluation grid size");
  fit_cmd->add_option("--out", fo.out, "output directory")->required();
  fit_cmd->add_flag("--allow-nonconverged", fo.allow_nonconverged,
                    "write outputs even when the ELBO did not converge (exit code stays 3)");

  SelectOptions so;
  auto* select_cmd = app.add_subcommand("select", "model choice over a (K, L) grid");
  add_data_options(select_cmd, so.data);
  add_model_options(select_cmd, so.model);
  select_cmd->add_option("--l-min", so.l_min, "smallest L (largest is --num-components)");
  select_cmd->add_option("--pve-threshold", so.pve_threshold, "cumulative PVE threshold");
  select_cmd->add_option("--grid-size", so.grid_size, "evaluation grid size");
  select_cmd->add_option("--out", so.out, "output directory")->required();

  PredictOptions po;
  std::uint64_t predict_seed = 0;
  auto* predict_cmd = app.add_subcommand("predict", "trajectories with 95% pointwise bands");
  predict_cmd->add_option("--fit", po.fit_dir, "output directory of a previous fit")->required();
  predict_cmd->add_option("--subjects", po.subjects, "subject ids (comma separated) or all")
      ->delimiter(',');
  predict_cmd->add_option("--grid-size", po.grid_size, "grid size (default: the fit's)");
  predict_cmd->add_option("--samples", po.samples, "posterior draws per subject");
  auto* pseed = predict_cmd->add_option("--seed", predict_seed, "seed (default: the fit's)");
  predict_cmd->add_option("--out", po.out, "output directory")->required();

  SimulateOptions mo;
  std::uint64_t sim_seed = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a dataset and its ground truth");
  sim_cmd->add_option("--scenario", mo.scenario, "scenario JSON")->required();
  auto* sseed = sim_cmd->add_option("--seed", sim_seed, "override the scenario seed");
  sim_cmd->add_option("--grid-size", mo.grid_size, "grid size of the exported truth");
  sim_cmd->add_option("--out", mo.out, "output directory")->required();

  BenchOptions bo;
  std::uint64_t bench_seed = 0;
  auto* bench_cmd = app.add_subcommand("bench", "replicate study: generate, fit, score");
  bench_cmd->add_option("--scenario", bo.scenario, "scenario JSON")->required();
  auto* bseed = bench_cmd->add_option("--seed", bench_seed, "override the scenario seed");
  bench_cmd->add_option("--replicates", bo.replicates, "number of replicates");
  bench_cmd->add_option("--engine", bo.engine, "mfvb or vmp")
      ->check(CLI::IsMember({"mfvb", "vmp"}));
  bench_cmd->add_option("--num-components", bo.num_components, "L_max");
  bench_cmd->add_option("--select-k", bo.select_k, "rule or model")
      ->check(CLI::IsMember({"rule", "model"}));
  bench_cmd->add_option("--k-candidates", bo.k_candidates, "K values for model choice")
      ->delimiter(',');
  bench_cmd->add_option("--pve-threshold", bo.pve_threshold, "cumulative PVE threshold");
  bench_cmd->add_option("--grid-size", bo.grid_size, "evaluation grid size");
  bench_cmd->add_flag("--univariate", bo.univariate, "also run per-variable univariate fits");
  bench_cmd->add_flag("--no-multivariate", bo.no_multivariate, "skip the joint fit");
  bench_cmd->add_option("--univariate-variables", bo.univariate_variables,
                        "1-based variables for univariate fits (default all)")
      ->delimiter(',');
  bench_cmd->add_option("--tol", bo.tol, "relative ELBO tolerance");
  bench_cmd->add_option("--max-iter", bo.max_iter, "maximum number of sweeps");
  bench_cmd->add_option("--threads", bo.threads, "worker threads, 0 = hardware concurrency");
  bench_cmd->add_option("--out", bo.out, "output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  spdlog::set_level(verbose ? spdlog::level::debug
                            : quiet ? spdlog::level::err : spdlog::level::info);

  if (*fit_cmd) {
    fo.model.threads_given = fit_cmd->count("--threads") > 0;
    return guarded([&] { return cmd_fit(fo, args); });
  }
  if (*select_cmd) return guarded([&] { return cmd_select(so, args); });
  if (*predict_cmd) {
    if (*pseed) po.seed = predict_seed;
    return guarded([&] { return cmd_predict(po, args); });
  }
  if (*sim_cmd) {
    if (*sseed) mo.seed = sim_seed;
    return guarded([&] { return cmd_simulate(mo, args); });
  }
  if (*bseed) bo.seed = bench_seed;
  return guarded([&] { return cmd_bench(bo, args); });
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
  return run(args);
}

}  // namespace bmfpca::cli
