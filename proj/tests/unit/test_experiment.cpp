#include "conicmtl/experiment.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace conicmtl;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig ex;
  ex.dataset.synth.tasks = 3;
  ex.dataset.synth.samples_per_task = 30;
  ex.dataset.synth.dimension = 3;
  ex.dataset.synth.noise = 0.4;
  ex.runs = 2;
  ex.cv_folds = 3;
  ex.fractions = {0.5};
  ex.grid.C = {0.5, 2.0};
  ex.grid.p = {2.0};
  ex.grid.a_fraction = {0.5};
  ex.grid.p_exp = {0.5};
  ex.kernels = {KernelSpec::linear(), KernelSpec::gaussian(1.0)};
  ex.master_seed = 17;
  return ex;
}

std::string csv_of(const ResultTable& t) {
  std::ostringstream os;
  write_results_csv(os, t);
  return os.str();
}

}  // namespace

TEST(Fmt, ShortestRoundTrip) {
  EXPECT_EQ(detail::fmt(0.3), "0.3");
  EXPECT_EQ(detail::fmt(4.0 / 3.0), "1.3333333333333333");
  EXPECT_EQ(detail::fmt(2.0), "2");
  EXPECT_EQ(detail::fmt(std::nan("")), "nan");
}

TEST(GridPoints, AscendingOrderAndMethodShape) {
  HyperGrid g;
  g.C = {2.0, 1.0};
  g.p = {2.0, 1.0};
  g.a_fraction = {0.5, 0.25};
  const auto conic = detail::grid_points(Method::kConic, g);
  ASSERT_EQ(conic.size(), 8u);
  EXPECT_EQ(conic.front().C, 1.0);
  EXPECT_EQ(conic.front().p, 1.0);
  EXPECT_EQ(*conic.front().a_fraction, 0.25);
  EXPECT_EQ(detail::grid_points(Method::kAverage, g).size(), 4u);
  EXPECT_EQ(detail::grid_points(Method::kParetoPath, g).size(), 4u * g.p_exp.size());
}

TEST(CrossValidate, OnePointGridSkipsTraining) {
  auto ex = small_config();
  ex.grid.C = {1.0};
  const auto data = load_dataset(ex.dataset, 1);
  const auto set = prepare_training_set(data.tasks, ex.kernels);
  const auto hp = cross_validate(set, Method::kConic, ex, 3, 0);
  EXPECT_EQ(hp.C, 1.0);
  EXPECT_TRUE(std::isinf(hp.cv_score));
}

TEST(CrossValidate, TieBrokenTowardSmallerP) {
  auto ex = small_config();
  ex.grid.C = {1.0};
  ex.grid.p = {2.0, 1.0};
  ex.kernels = {KernelSpec::gaussian(1.0)};  // M = 1, so p has no effect
  const auto data = load_dataset(ex.dataset, 2);
  const auto set = prepare_training_set(data.tasks, ex.kernels);
  const auto hp = cross_validate(set, Method::kAverage, ex, 3, 0);
  EXPECT_EQ(hp.p, 1.0);
}

TEST(CrossValidate, FoldOrderDoesNotChangeScores) {
  auto ex = small_config();
  const auto data = load_dataset(ex.dataset, 3);
  const auto set = prepare_training_set(data.tasks, ex.kernels);
  std::vector<std::vector<int>> folds, swapped;
  for (const auto& t : set.tasks) {
    folds.push_back(stratified_folds(t.y, 2, 9));
    swapped.push_back(folds.back());
    for (auto& f : swapped.back()) f = 1 - f;
  }
  const auto a = cross_validate(set, Method::kConic, ex, 2, 0, &folds);
  const auto b = cross_validate(set, Method::kConic, ex, 2, 0, &swapped);
  EXPECT_EQ(a.C, b.C);
  EXPECT_NEAR(a.cv_score, b.cv_score, 1e-15);
}

TEST(CrossValidate, FoldsShrinkToSmallestClass) {
  auto ex = small_config();
  ex.dataset.synth.samples_per_task = 6;  // 3 per class
  const auto data = load_dataset(ex.dataset, 4);
  const auto set = prepare_training_set(data.tasks, ex.kernels);
  EXPECT_NO_THROW(cross_validate(set, Method::kAverage, ex, 5, 0));
  // Keep a single positive sample in task 0.
  auto tiny = data;
  std::vector<Eigen::Index> keep;
  int pos = 0;
  for (Eigen::Index i = 0; i < data.tasks[0].size(); ++i)
    if (data.tasks[0].y[i] < 0 || pos++ == 0) keep.push_back(i);
  tiny.tasks[0] = data.tasks[0].subset(keep);
  const auto small_set = prepare_training_set(tiny.tasks, ex.kernels);
  EXPECT_THROW(cross_validate(small_set, Method::kAverage, ex, 5, 0), DegenerateTaskError);
}

TEST(RunExperiment, SeparableDataGivesPerfectAccuracy) {
  auto ex = small_config();
  ex.methods = {Method::kAverage};
  ex.runs = 1;
  ex.dataset.synth.noise = 0.0;
  ex.kernels = {KernelSpec::linear()};
  const auto t = run_experiment(ex);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_TRUE(t[0].error.empty()) << t[0].error;
  EXPECT_EQ(t[0].mean_accuracy, 1.0);
}

TEST(RunExperiment, DeterministicCsvWithSchema) {
  const auto ex = small_config();
  const auto a = csv_of(run_experiment(ex));
  const auto b = csv_of(run_experiment(ex));
  EXPECT_EQ(a, b);
  std::istringstream is(a);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "dataset,fraction,method,seed,mean_accuracy,C,p,a,p_exp,wall_ms,converged");
  std::istringstream again(a);
  const auto rows = read_results_csv(again);
  EXPECT_EQ(rows.size(), static_cast<std::size_t>(ex.runs) * ex.methods.size());
  for (const auto& r : rows) {
    EXPECT_GE(r.mean_accuracy, 0.0);
    EXPECT_LE(r.mean_accuracy, 1.0);
  }
}

TEST(RunExperiment, FailuresAreRecordedPerRow) {
  auto ex = small_config();
  ex.runs = 1;
  ex.methods = {Method::kAverage};
  ex.fractions = {0.01};
  const auto t = run_experiment(ex);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_FALSE(t[0].error.empty());
  EXPECT_NE(csv_of(t).find(",nan,"), std::string::npos);
  ex.dataset.kind = "taskdir";
  ex.dataset.path = "/nonexistent";
  EXPECT_THROW(run_experiment(ex), Error);
}

TEST(RunExperiment, BoundsAttachToMultiTaskRows) {
  auto ex = small_config();
  ex.runs = 1;
  ex.bounds = true;
  ex.bound_options.mc_samples = 200;
  const auto t = run_experiment(ex);
  for (const auto& r : t) EXPECT_EQ(r.bound.has_value(), r.method != Method::kSingleTask);
  std::ostringstream os;
  write_bounds_csv(os, t);
  EXPECT_EQ(os.str().rfind("dataset,fraction,method,seed,tasks", 0), 0u);
}

TEST(Summary, StarsComeFromCsvAlone) {
  std::ostringstream csv;
  csv << kResultsHeader << '\n';
  for (int s = 0; s < 10; ++s) {
    csv << "d,0.3,conic," << s << ',' << 0.9 + 0.001 * s << ",1,2,0.5,,0,1\n";
    csv << "d,0.3,average," << s << ',' << 0.7 + 0.001 * (s % 3) << ",1,2,,,0,1\n";
  }
  std::istringstream is(csv.str());
  const auto rows = read_results_csv(is);
  std::ostringstream out;
  write_summary(out, rows);
  const std::string text = out.str();
  EXPECT_NE(text.find('^'), std::string::npos);
  EXPECT_NE(text.find("*"), std::string::npos);
  std::istringstream bad("nope\n");
  EXPECT_THROW(read_results_csv(bad), ParseError);
}
