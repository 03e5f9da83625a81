#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace bmfpca {

// One (subject, variable) curve: strictly increasing times in [0,1] and the
// matching noisy values.
struct Series {
  Eigen::VectorXd times;
  Eigen::VectorXd values;

  std::size_t size() const { return static_cast<std::size_t>(times.size()); }
};

struct TimeRange {
  double min = 0.0;
  double max = 1.0;
};

// Irregularly sampled multivariate functional observations, stored
// subject-major: series(i, j) is subject i on variable j.
//
// The type is a plain immutable value; invariants are checked by validate(),
// which every ingestion path and every fitting routine runs.
class FunctionalDataset {
 public:
  FunctionalDataset() = default;
  FunctionalDataset(std::vector<std::string> subject_ids,
                    std::vector<std::string> variable_names,
                    std::vector<std::vector<Series>> series,
                    TimeRange time_range = {});

  std::size_t n() const { return subject_ids_.size(); }
  std::size_t p() const { return variable_names_.size(); }

  const Series& series(std::size_t i, std::size_t j) const { return series_[i][j]; }
  std::size_t count(std::size_t i, std::size_t j) const { return series_[i][j].size(); }
  std::size_t total_count(std::size_t j) const;
  std::size_t total_count() const;

  const std::vector<std::string>& subject_ids() const { return subject_ids_; }
  const std::vector<std::string>& variable_names() const { return variable_names_; }
  const TimeRange& time_range() const { return time_range_; }

  // Dataset restricted to a single variable (used by per-variable runs).
  FunctionalDataset select_variable(std::size_t j) const;
  // Dataset restricted to the given subjects, in the given order.
  FunctionalDataset select_subjects(const std::vector<std::size_t>& subjects) const;

  friend bool operator==(const FunctionalDataset& a, const FunctionalDataset& b);

 private:
  std::vector<std::string> subject_ids_;
  std::vector<std::string> variable_names_;
  std::vector<std::vector<Series>> series_;
  TimeRange time_range_;
};

struct VariableSummary {
  std::string name;
  double median_count = 0.0;
  std::size_t min_count = 0;
  std::size_t max_count = 0;
};

struct ValidationReport {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<VariableSummary> variables;
  std::vector<std::string> failures;

  bool valid() const { return failures.empty(); }
  std::string describe() const;
};

ValidationReport validate(const FunctionalDataset& dataset);

// Throws ValidationError carrying every failure listed in the report.
void require_valid(const FunctionalDataset& dataset);

enum class TimeNormalization {
  // Keep times already inside [0,1]; otherwise apply the min-max map.
  automatic,
  min_max,
  // Times must already lie in [0,1].
  none,
};

struct LongCsvConfig {
  std::string col_subject = "subject";
  std::string col_variable = "variable";
  std::string col_time = "time";
  std::string col_value = "value";
  TimeNormalization normalization = TimeNormalization::automatic;
};

FunctionalDataset load_long_csv(const std::filesystem::path& path,
                                const LongCsvConfig& config = {});

// Writes subject,variable,time,value rows with times mapped back to the
// original scale and 17 significant digits, so load_long_csv restores the
// dataset exactly.
void write_long_csv(const FunctionalDataset& dataset, const std::filesystem::path& path,
                    const LongCsvConfig& config = {});

// Median of n_i^{(j)} over subjects, per variable.
std::vector<double> median_counts(const FunctionalDataset& dataset);

// Hash of ids, names and every stored time/value.
std::string dataset_fingerprint(const FunctionalDataset& dataset);

}  // namespace bmfpca
