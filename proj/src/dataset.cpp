#include "bmfpca/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <boost/tokenizer.hpp>

#include "bmfpca/errors.hpp"
#include "bmfpca/format.hpp"

namespace bmfpca {

FunctionalDataset::FunctionalDataset(std::vector<std::string> subject_ids,
                                     std::vector<std::string> variable_names,
                                     std::vector<std::vector<Series>> series,
                                     TimeRange time_range)
    : subject_ids_(std::move(subject_ids)),
      variable_names_(std::move(variable_names)),
      series_(std::move(series)),
      time_range_(time_range) {
  if (series_.size() != subject_ids_.size()) {
    throw ShapeError("dataset: series rows do not match subject count");
  }
  for (const auto& row : series_) {
    if (row.size() != variable_names_.size()) {
      throw ShapeError("dataset: series columns do not match variable count");
    }
    for (const auto& s : row) {
      if (s.times.size() != s.values.size()) {
        throw ShapeError("dataset: times and values differ in length");
      }
    }
  }
}

std::size_t FunctionalDataset::total_count(std::size_t j) const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < n(); ++i) total += count(i, j);
  return total;
}

std::size_t FunctionalDataset::total_count() const {
  std::size_t total = 0;
  for (std::size_t j = 0; j < p(); ++j) total += total_count(j);
  return total;
}

FunctionalDataset FunctionalDataset::select_variable(std::size_t j) const {
  std::vector<std::vector<Series>> rows(n());
  for (std::size_t i = 0; i < n(); ++i) rows[i] = {series_[i][j]};
  return FunctionalDataset(subject_ids_, {variable_names_[j]}, std::move(rows), time_range_);
}

FunctionalDataset FunctionalDataset::select_subjects(
    const std::vector<std::size_t>& subjects) const {
  std::vector<std::string> ids;
  std::vector<std::vector<Series>> rows;
  for (std::size_t i : subjects) {
    ids.push_back(subject_ids_.at(i));
    rows.push_back(series_.at(i));
  }
  return FunctionalDataset(std::move(ids), variable_names_, std::move(rows), time_range_);
}

bool operator==(const FunctionalDataset& a, const FunctionalDataset& b) {
  if (a.subject_ids_ != b.subject_ids_ || a.variable_names_ != b.variable_names_) return false;
  if (a.time_range_.min != b.time_range_.min || a.time_range_.max != b.time_range_.max) {
    return false;
  }
  for (std::size_t i = 0; i < a.n(); ++i) {
    for (std::size_t j = 0; j < a.p(); ++j) {
      const Series& x = a.series_[i][j];
      const Series& y = b.series_[i][j];
      if (x.times.size() != y.times.size()) return false;
      if (x.times != y.times || x.values != y.values) return false;
    }
  }
  return true;
}

namespace {

double median_of(std::vector<std::size_t> counts) {
  if (counts.empty()) return 0.0;
  std::sort(counts.begin(), counts.end());
  const std::size_t m = counts.size() / 2;
  if (counts.size() % 2 == 1) return static_cast<double>(counts[m]);
  return 0.5 * static_cast<double>(counts[m - 1] + counts[m]);
}

}  // namespace

std::vector<double> median_counts(const FunctionalDataset& dataset) {
  std::vector<double> medians(dataset.p());
  for (std::size_t j = 0; j < dataset.p(); ++j) {
    std::vector<std::size_t> counts(dataset.n());
    for (std::size_t i = 0; i < dataset.n(); ++i) counts[i] = dataset.count(i, j);
    medians[j] = median_of(std::move(counts));
  }
  return medians;
}

ValidationReport validate(const FunctionalDataset& dataset) {
  ValidationReport report;
  report.n = dataset.n();
  report.p = dataset.p();
  if (dataset.n() == 0) report.failures.push_back("dataset has no subjects (n = 0)");
  if (dataset.p() == 0) report.failures.push_back("dataset has no variables (p = 0)");

  for (std::size_t j = 0; j < dataset.p(); ++j) {
    VariableSummary summary;
    summary.name = dataset.variable_names()[j];
    std::vector<std::size_t> counts(dataset.n());
    for (std::size_t i = 0; i < dataset.n(); ++i) counts[i] = dataset.count(i, j);
    if (!counts.empty()) {
      summary.min_count = *std::min_element(counts.begin(), counts.end());
      summary.max_count = *std::max_element(counts.begin(), counts.end());
    }
    summary.median_count = median_of(counts);
    report.variables.push_back(summary);
  }

  for (std::size_t i = 0; i < dataset.n(); ++i) {
    for (std::size_t j = 0; j < dataset.p(); ++j) {
      const Series& s = dataset.series(i, j);
      const std::string where = "subject '" + dataset.subject_ids()[i] + "', variable '" +
                                dataset.variable_names()[j] + "'";
      if (s.size() < 2) {
        report.failures.push_back(where + ": " + std::to_string(s.size()) +
                                  " observation(s), at least 2 required");
      }
      bool finite = true;
      bool in_range = true;
      bool increasing = true;
      for (Eigen::Index k = 0; k < s.times.size(); ++k) {
        finite = finite && std::isfinite(s.times[k]) && std::isfinite(s.values[k]);
        in_range = in_range && s.times[k] >= 0.0 && s.times[k] <= 1.0;
        if (k > 0) increasing = increasing && s.times[k] > s.times[k - 1];
      }
      if (!finite) report.failures.push_back(where + ": non-finite time or value");
      if (!in_range) report.failures.push_back(where + ": time outside [0,1]");
      if (!increasing) {
        report.failures.push_back(where + ": times not strictly increasing (duplicate timestamp)");
      }
    }
  }
  return report;
}

std::string ValidationReport::describe() const {
  std::ostringstream out;
  out << "n=" << n << " p=" << p;
  for (const auto& v : variables) {
    out << "\n  " << v.name << ": median " << v.median_count << ", min " << v.min_count
        << ", max " << v.max_count;
  }
  for (const auto& f : failures) out << "\n  invalid: " << f;
  return out.str();
}

void require_valid(const FunctionalDataset& dataset) {
  ValidationReport report = validate(dataset);
  if (!report.valid()) {
    std::string message = "dataset validation failed:";
    for (const auto& f : report.failures) message += "\n  " + f;
    throw ValidationError(message);
  }
}

namespace {

using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;

std::vector<std::string> split_csv_line(const std::string& line) {
  Tokenizer tokens(line);
  return {tokens.begin(), tokens.end()};
}

double parse_double(const std::string& cell, std::size_t row, const std::string& column) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last) {
    throw ParseError("row " + std::to_string(row) + ": cannot parse '" + cell + "' in column '" +
                     column + "' as a number");
  }
  return value;
}

std::size_t find_column(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw ConfigError("CSV header has no column named '" + name + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

FunctionalDataset load_long_csv(const std::filesystem::path& path, const LongCsvConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw ParseError("'" + path.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  const std::size_t c_subject = find_column(header, config.col_subject);
  const std::size_t c_variable = find_column(header, config.col_variable);
  const std::size_t c_time = find_column(header, config.col_time);
  const std::size_t c_value = find_column(header, config.col_value);
  const std::size_t needed = std::max({c_subject, c_variable, c_time, c_value}) + 1;

  std::vector<std::string> subjects;
  std::vector<std::string> variables;
  std::map<std::string, std::size_t> subject_index;
  std::map<std::string, std::size_t> variable_index;
  struct Row {
    std::size_t i, j;
    double t, x;
  };
  std::vector<Row> rows;

  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < needed) {
      throw ParseError("row " + std::to_string(row_number) + ": expected at least " +
                       std::to_string(needed) + " fields, found " + std::to_string(cells.size()));
    }
    const std::string& sid = cells[c_subject];
    const std::string& vid = cells[c_variable];
    auto [sit, s_new] = subject_index.try_emplace(sid, subjects.size());
    if (s_new) subjects.push_back(sid);
    auto [vit, v_new] = variable_index.try_emplace(vid, variables.size());
    if (v_new) variables.push_back(vid);
    rows.push_back({sit->second, vit->second,
                    parse_double(cells[c_time], row_number, config.col_time),
                    parse_double(cells[c_value], row_number, config.col_value)});
  }

  TimeRange range{0.0, 1.0};
  if (!rows.empty()) {
    double lo = rows.front().t;
    double hi = rows.front().t;
    for (const Row& r : rows) {
      if (!std::isfinite(r.t)) {
        throw ValidationError("non-finite time value in '" + path.string() + "'");
      }
      lo = std::min(lo, r.t);
      hi = std::max(hi, r.t);
    }
    const bool inside_unit = lo >= 0.0 && hi <= 1.0;
    bool rescale = false;
    switch (config.normalization) {
      case TimeNormalization::automatic:
        rescale = !inside_unit;
        break;
      case TimeNormalization::min_max:
        rescale = true;
        break;
      case TimeNormalization::none:
        if (!inside_unit) throw ValidationError("times outside [0,1] and normalization disabled");
        break;
    }
    if (rescale) {
      if (!(hi > lo)) throw ValidationError("all time values are identical; cannot normalize");
      range = {lo, hi};
      const double width = hi - lo;
      for (Row& r : rows) r.t = (r.t - lo) / width;
    }
  }

  std::vector<std::vector<std::vector<std::pair<double, double>>>> buckets(
      subjects.size(), std::vector<std::vector<std::pair<double, double>>>(variables.size()));
  for (const Row& r : rows) buckets[r.i][r.j].emplace_back(r.t, r.x);

  std::vector<std::vector<Series>> series(subjects.size(), std::vector<Series>(variables.size()));
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    for (std::size_t j = 0; j < variables.size(); ++j) {
      auto& b = buckets[i][j];
      std::stable_sort(b.begin(), b.end(),
                       [](const auto& a, const auto& c) { return a.first < c.first; });
      Series& s = series[i][j];
      s.times.resize(static_cast<Eigen::Index>(b.size()));
      s.values.resize(static_cast<Eigen::Index>(b.size()));
      for (std::size_t k = 0; k < b.size(); ++k) {
        s.times[static_cast<Eigen::Index>(k)] = b[k].first;
        s.values[static_cast<Eigen::Index>(k)] = b[k].second;
      }
    }
  }

  FunctionalDataset dataset(std::move(subjects), std::move(variables), std::move(series), range);
  require_valid(dataset);
  return dataset;
}

void write_long_csv(const FunctionalDataset& dataset, const std::filesystem::path& path,
                    const LongCsvConfig& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << config.col_subject << ',' << config.col_variable << ',' << config.col_time << ','
      << config.col_value << '\n';
  const TimeRange& range = dataset.time_range();
  const double width = range.max - range.min;
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    for (std::size_t j = 0; j < dataset.p(); ++j) {
      const Series& s = dataset.series(i, j);
      for (Eigen::Index k = 0; k < s.times.size(); ++k) {
        out << csv_field(dataset.subject_ids()[i]) << ','
            << csv_field(dataset.variable_names()[j]) << ','
            << format_double(s.times[k] * width + range.min) << ','
            << format_double(s.values[k]) << '\n';
      }
    }
  }
}

std::string dataset_fingerprint(const FunctionalDataset& dataset) {
  Fingerprint fp;
  for (const auto& id : dataset.subject_ids()) fp.add(id);
  for (const auto& name : dataset.variable_names()) fp.add(name);
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    for (std::size_t j = 0; j < dataset.p(); ++j) {
      const Series& s = dataset.series(i, j);
      for (Eigen::Index k = 0; k < s.times.size(); ++k) {
        fp.add(s.times[k]);
        fp.add(s.values[k]);
      }
    }
  }
  return fp.hex();
}

}  // namespace bmfpca
