#include <fstream>

#include <gtest/gtest.h>

#include "bmfpca/dataset.hpp"
#include "bmfpca/errors.hpp"
#include "bmfpca/simulate.hpp"
#include "support.hpp"

using namespace bmfpca;

namespace {

std::filesystem::path write_file(const testkit::TempDir& dir, const std::string& name,
                                 const std::string& text) {
  const auto path = dir / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST(LongCsv, MinMaxNormalisation) {
  testkit::TempDir dir("csv");
  const auto path = write_file(dir, "d.csv",
                               "subject,variable,time,value\n"
                               "s1,v1,0,1.0\ns1,v1,10,2.0\ns2,v1,5,0.0\ns2,v1,10,1.0\n");
  const auto d = load_long_csv(path);
  ASSERT_EQ(d.n(), 2u);
  ASSERT_EQ(d.p(), 1u);
  EXPECT_EQ(d.series(0, 0).times, Eigen::Vector2d(0.0, 1.0));
  EXPECT_EQ(d.series(1, 0).times, Eigen::Vector2d(0.5, 1.0));
  EXPECT_EQ(d.series(0, 0).values, Eigen::Vector2d(1.0, 2.0));
  EXPECT_DOUBLE_EQ(d.time_range().max, 10.0);
}

TEST(LongCsv, CustomColumnsAndUnsortedRows) {
  testkit::TempDir dir("csv");
  const auto path = write_file(dir, "d.csv",
                               "value,id,t,marker\n"
                               "3,a,0.9,x\n1,a,0.1,x\n2,a,0.5,x\n");
  LongCsvConfig cfg;
  cfg.col_subject = "id";
  cfg.col_variable = "marker";
  cfg.col_time = "t";
  cfg.col_value = "value";
  const auto d = load_long_csv(path, cfg);
  EXPECT_EQ(d.series(0, 0).values, Eigen::Vector3d(1, 2, 3));
  EXPECT_EQ(d.series(0, 0).times, Eigen::Vector3d(0.1, 0.5, 0.9));
}

TEST(LongCsv, SingleObservationNamesSubjectAndVariable) {
  testkit::TempDir dir("csv");
  const auto path = write_file(dir, "d.csv",
                               "subject,variable,time,value\n"
                               "s1,v1,0.1,1\ns1,v1,0.2,1\ns1,v2,0.3,1\ns1,v2,0.4,1\n"
                               "s2,v1,0.1,1\ns2,v1,0.5,1\ns2,v2,0.3,1\n");
  try {
    load_long_csv(path);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("s2"), std::string::npos);
    EXPECT_NE(msg.find("v2"), std::string::npos);
  }
}

TEST(LongCsv, RejectsDuplicatesBadCellsAndMissingColumns) {
  testkit::TempDir dir("csv");
  EXPECT_THROW(load_long_csv(write_file(dir, "dup.csv",
                                        "subject,variable,time,value\n"
                                        "s1,v1,0.2,1\ns1,v1,0.2,2\ns1,v1,0.3,2\n")),
               ValidationError);
  EXPECT_THROW(load_long_csv(write_file(dir, "bad.csv",
                                        "subject,variable,time,value\n"
                                        "s1,v1,0.2,abc\ns1,v1,0.3,2\n")),
               ParseError);
  EXPECT_THROW(load_long_csv(write_file(dir, "nan.csv",
                                        "subject,variable,time,value\n"
                                        "s1,v1,0.2,nan\ns1,v1,0.3,2\n")),
               ValidationError);
  EXPECT_THROW(load_long_csv(write_file(dir, "cols.csv", "id,variable,time,value\ns1,v1,0,1\n")),
               ConfigError);
  EXPECT_THROW(load_long_csv(dir / "missing.csv"), ConfigError);
}

TEST(LongCsv, SimulatedRoundTrip) {
  SimulationScenario s;
  s.n = 50;
  s.p = 3;
  s.seed = 9;
  const auto [data, truth] = generate_dataset(s);
  testkit::TempDir dir("csv");
  write_long_csv(data, dir / "sim.csv");
  const auto back = load_long_csv(dir / "sim.csv");
  EXPECT_TRUE(back == data);
  EXPECT_EQ(dataset_fingerprint(back), dataset_fingerprint(data));
}

TEST(Validation, MedianAndSummary) {
  std::vector<std::vector<Series>> series(3, std::vector<Series>(1));
  const int counts[] = {10, 20, 30};
  for (int i = 0; i < 3; ++i) {
    series[i][0].times = Eigen::VectorXd::LinSpaced(counts[i], 0.0, 1.0);
    series[i][0].values = Eigen::VectorXd::Zero(counts[i]);
  }
  const FunctionalDataset d({"a", "b", "c"}, {"v"}, series);
  const auto report = validate(d);
  EXPECT_TRUE(report.valid());
  EXPECT_DOUBLE_EQ(report.variables[0].median_count, 20.0);
  EXPECT_EQ(report.variables[0].min_count, 10u);
  EXPECT_EQ(report.variables[0].max_count, 30u);
  EXPECT_EQ(median_counts(d), std::vector<double>{20.0});
}

TEST(Validation, EmptyDatasetIsInvalid) {
  const auto report = validate(FunctionalDataset{});
  EXPECT_EQ(report.n, 0u);
  EXPECT_FALSE(report.valid());
  EXPECT_THROW(require_valid(FunctionalDataset{}), ValidationError);
}

TEST(Validation, SimulatedMedianWithinDrawRange) {
  SimulationScenario s;
  s.n = 40;
  s.obs_min = 10;
  s.obs_max = 20;
  const auto [data, truth] = generate_dataset(s);
  for (double m : median_counts(data)) {
    EXPECT_GE(m, 10.0);
    EXPECT_LE(m, 20.0);
  }
}

TEST(Dataset, SelectionsAndFingerprint) {
  const auto [data, truth] = generate_dataset(testkit::small_scenario(4));
  const auto v1 = data.select_variable(1);
  EXPECT_EQ(v1.p(), 1u);
  EXPECT_EQ(v1.series(3, 0).values, data.series(3, 1).values);
  const auto sub = data.select_subjects({5, 2});
  EXPECT_EQ(sub.subject_ids()[0], data.subject_ids()[5]);
  EXPECT_EQ(sub.series(1, 0).times, data.series(2, 0).times);
  EXPECT_NE(dataset_fingerprint(sub), dataset_fingerprint(data));
}
