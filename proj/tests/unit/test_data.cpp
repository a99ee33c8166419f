#include "conicmtl/data.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace conicmtl;
namespace fs = std::filesystem;

namespace {

LabeledSamples parse(const std::string& text, Eigen::Index d = 0) {
  std::istringstream is(text);
  return parse_sparse_text(is, d);
}

TaskDataset counted_task(int pos, int neg) {
  TaskDataset t;
  t.task_id = "x";
  t.X.resize(pos + neg, 1);
  t.y.resize(pos + neg);
  for (int i = 0; i < pos + neg; ++i) {
    t.X(i, 0) = i;
    t.y[i] = i < pos ? 1.0 : -1.0;
  }
  return t;
}

std::set<double> ids(const TaskDataset& t) {
  std::set<double> s;
  for (Eigen::Index i = 0; i < t.size(); ++i) s.insert(t.X(i, 0));
  return s;
}

}  // namespace

TEST(SparseText, Examples) {
  const auto a = parse("1 1:0.5 3:2\n-1\n", 3);
  ASSERT_EQ(a.X.rows(), 2);
  EXPECT_EQ(a.labels[0], 1.0);
  EXPECT_EQ(a.X(0, 0), 0.5);
  EXPECT_EQ(a.X(0, 1), 0.0);
  EXPECT_EQ(a.X(0, 2), 2.0);
  EXPECT_EQ(a.labels[1], -1.0);
  EXPECT_EQ(a.X.row(1).squaredNorm(), 0.0);
}

TEST(SparseText, Errors) {
  try {
    parse("1 1:1\n1 2:1 1:1\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse("1 0:1\n"), ParseError);
  EXPECT_THROW(parse("x 1:1\n"), ParseError);
  EXPECT_THROW(parse("1 1:abc\n"), ParseError);
  EXPECT_THROW(parse("1 4:1\n", 3), ParseError);
}

TEST(SparseText, BinaryLabelsAreMapped) {
  const auto s = parse("0 1:1\n3 1:2\n# comment\n0 1:3 # trailing\n");
  EXPECT_EQ(s.labels, (std::vector<double>{-1, 1, -1}));
  const auto m = parse("0 1:1\n3 1:2\n7 1:3\n");
  EXPECT_EQ(m.labels, (std::vector<double>{0, 3, 7}));
}

TEST(SparseText, RoundTrip) {
  const auto s = parse("1 1:0.1 4:-2.5e-7\n-1 2:3\n1\n", 5);
  std::ostringstream os;
  write_sparse_text(os, s.X, s.labels);
  const auto back = parse(os.str(), 5);
  EXPECT_EQ(back.labels, s.labels);
  EXPECT_EQ(back.X, s.X);
}

TEST(BuildOvoTasks, TaskCounts) {
  for (int k : {2, 4, 10}) {
    LabeledSamples s;
    s.X = Matrix::Zero(2 * k, 1);
    for (int i = 0; i < 2 * k; ++i) s.labels.push_back(i % k);
    EXPECT_EQ(build_ovo_tasks(s).tasks.size(), static_cast<std::size_t>(k * (k - 1) / 2));
  }
}

TEST(BuildOvoTasks, LowerClassIsPositiveAndBinaryIsUnchanged) {
  LabeledSamples s;
  s.X = (Matrix(4, 1) << 0, 1, 2, 3).finished();
  s.labels = {2, 1, 3, 1};
  const auto d = build_ovo_tasks(s);
  ASSERT_EQ(d.tasks.size(), 3u);
  EXPECT_EQ(d.tasks[0].task_id, "1_vs_2");
  EXPECT_EQ(d.tasks[0].y, (Vector(3) << -1, 1, 1).finished());
  EXPECT_EQ(d.tasks[2].task_id, "2_vs_3");

  const auto bin = parse("1 1:1\n-1 1:2\n1 1:3\n");
  const auto b = build_ovo_tasks(bin);
  ASSERT_EQ(b.tasks.size(), 1u);
  EXPECT_EQ(b.tasks[0].y, (Vector(3) << 1, -1, 1).finished());
  EXPECT_EQ(b.tasks[0].X, bin.X);
}

TEST(BalancedResample, Examples) {
  const auto t = counted_task(30, 10);
  const auto a = balanced_resample(t, 1);
  EXPECT_EQ(a.count(1.0), 10);
  EXPECT_EQ(a.count(-1.0), 10);
  const auto b = balanced_resample(t, 2);
  EXPECT_EQ(b.size(), a.size());
  EXPECT_NE(ids(a), ids(b));
  EXPECT_EQ(ids(balanced_resample(t, 1)), ids(a));
  const auto even = counted_task(10, 10);
  EXPECT_EQ(ids(balanced_resample(even, 3)), ids(even));
  EXPECT_THROW(balanced_resample(counted_task(5, 0), 1), DegenerateTaskError);
}

TEST(StratifiedSplit, Examples) {
  const auto [tr, te] = stratified_split(counted_task(10, 10), 0.5, 1);
  EXPECT_EQ(tr.count(1.0), 5);
  EXPECT_EQ(tr.count(-1.0), 5);
  EXPECT_EQ(te.count(1.0), 5);
  auto all = ids(tr);
  for (double v : ids(te)) EXPECT_TRUE(all.insert(v).second);
  EXPECT_EQ(all.size(), 20u);
  const auto [tr2, te2] = stratified_split(counted_task(50, 50), 0.2, 4);
  EXPECT_EQ(tr2.count(1.0), 10);
  EXPECT_EQ(tr2.count(-1.0), 10);
  EXPECT_EQ(ids(stratified_split(counted_task(50, 50), 0.2, 4).first), ids(tr2));
  EXPECT_THROW(stratified_split(counted_task(3, 3), 0.1, 1), DegenerateTaskError);
}

TEST(StratifiedFolds, BalancedAcrossFolds) {
  const auto t = counted_task(12, 8);
  const auto f = stratified_folds(t.y, 4, 5);
  std::vector<int> pos(4, 0), neg(4, 0);
  for (std::size_t i = 0; i < f.size(); ++i) (t.y[static_cast<Eigen::Index>(i)] > 0 ? pos : neg)[static_cast<std::size_t>(f[i])]++;
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(pos[static_cast<std::size_t>(k)], 3);
    EXPECT_EQ(neg[static_cast<std::size_t>(k)], 2);
  }
  EXPECT_THROW(stratified_folds(t.y, 1, 0), std::invalid_argument);
}

TEST(SynthMultitask, SimilarityOneSharesDirection) {
  SynthConfig c;
  c.similarity = 1.0;
  c.seed = 3;
  const auto s = synth_multitask(c);
  for (const auto& d : s.directions) EXPECT_LE((d - s.shared_direction).norm(), 1e-14);
  for (const auto& t : s.data.tasks) {
    EXPECT_EQ(t.count(1.0), 20);
    EXPECT_EQ(t.count(-1.0), 20);
  }
}

TEST(SynthMultitask, NoiselessIsSeparable) {
  SynthConfig c;
  c.noise = 0.0;
  c.samples_per_task = 200;
  const auto s = synth_multitask(c);
  for (std::size_t t = 0; t < s.data.tasks.size(); ++t) {
    const auto& task = s.data.tasks[t];
    const Vector margin = (task.X * s.directions[t]).cwiseProduct(task.y);
    EXPECT_GT(margin.minCoeff(), 0.0);
  }
}

TEST(SynthMultitask, ZeroSimilarityDirectionsDecorrelate) {
  double sum = 0.0;
  long pairs = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SynthConfig c;
    c.similarity = 0.0;
    c.tasks = 6;
    c.dimension = 8;
    c.seed = seed;
    const auto s = synth_multitask(c);
    for (std::size_t a = 0; a < s.directions.size(); ++a)
      for (std::size_t b = a + 1; b < s.directions.size(); ++b, ++pairs) sum += s.directions[a].dot(s.directions[b]);
  }
  // Each cosine has standard deviation 1/sqrt(d); the mean over 1500 pairs is far tighter.
  EXPECT_LT(std::abs(sum / static_cast<double>(pairs)), 0.05);
}

TEST(SynthMultitask, Deterministic) {
  SynthConfig c;
  c.seed = 77;
  EXPECT_EQ(synth_multitask(c).data.tasks[2].X, synth_multitask(c).data.tasks[2].X);
}

TEST(TaskDirectory, RoundTrip) {
  SynthConfig c;
  c.tasks = 3;
  c.samples_per_task = 6;
  const auto s = synth_multitask(c);
  const auto dir = fs::temp_directory_path() / "conicmtl_taskdir";
  fs::remove_all(dir);
  write_task_directory(dir, s.data);
  const auto back = load_task_directory(dir);
  ASSERT_EQ(back.tasks.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(back.tasks[t].task_id, s.data.tasks[t].task_id);
    EXPECT_EQ(back.tasks[t].X, s.data.tasks[t].X);
    EXPECT_EQ(back.tasks[t].y, s.data.tasks[t].y);
  }
  EXPECT_THROW(load_task_directory(dir / "missing"), Error);
}

TEST(BundledData, SampleTasksLoad) {
  const auto d = load_task_directory(fs::path(CONICMTL_DATA_DIR) / "sample_tasks");
  EXPECT_GE(d.tasks.size(), 2u);
  EXPECT_NO_THROW(d.validate(true));
  const auto mc = load_sparse_text(fs::path(CONICMTL_DATA_DIR) / "sample_multiclass.txt");
  EXPECT_GE(mc.classes().size(), 3u);
}
