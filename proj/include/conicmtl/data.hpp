#pragma once

// Dataset ingestion and task construction.

#include "conicmtl/common.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace conicmtl {

/// Labeled samples of one binary task; y in {-1, +1}, one sample per row of X.
struct TaskDataset {
  std::string task_id;
  Matrix X;
  Vector y;
  std::string source;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return y.size(); }
  Eigen::Index count(double label) const { return (y.array() == label).count(); }

  TaskDataset subset(const std::vector<Eigen::Index>& idx) const {
    return {task_id, X(idx, Eigen::all), y(idx), source, seed};
  }

  /// Throws unless labels are ±1, features finite and (optionally) both classes present.
  void validate(bool need_both_classes = true) const {
    if (X.rows() != y.size()) throw std::invalid_argument("task " + task_id + ": X and y sizes differ");
    if (!X.allFinite()) throw std::invalid_argument("task " + task_id + ": non-finite feature value");
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y[i] != 1.0 && y[i] != -1.0) throw std::invalid_argument("task " + task_id + ": labels must be +1/-1");
    if (need_both_classes && (count(1.0) == 0 || count(-1.0) == 0))
      throw DegenerateTaskError("task " + task_id + " does not contain both classes");
  }
};

struct MultiTaskDataset {
  std::vector<TaskDataset> tasks;
  Eigen::Index dimension = 0;

  void validate(bool need_both_classes = true) const {
    std::set<std::string> ids;
    for (const auto& t : tasks) {
      if (t.X.cols() != dimension)
        throw std::invalid_argument("task " + t.task_id + " has dimension " + std::to_string(t.X.cols()) +
                                    ", expected " + std::to_string(dimension));
      if (!ids.insert(t.task_id).second) throw std::invalid_argument("duplicate task id " + t.task_id);
      t.validate(need_both_classes);
    }
  }
};

/// Raw rows of an SVMlight file: dense features plus the label values as written.
struct LabeledSamples {
  Matrix X;
  std::vector<double> labels;

  std::vector<double> classes() const {
    std::set<double> s(labels.begin(), labels.end());
    return {s.begin(), s.end()};
  }
};

/// Parses SVMlight sparse text: "label idx:val idx:val ..." with 1-based,
/// strictly ascending indices. Blank lines and '#' comments are skipped.
/// `dimension` = 0 infers it from the largest index. Two-class label sets other
/// than {-1, +1} are remapped, lower class to -1 and higher class to +1.
inline LabeledSamples parse_sparse_text(std::istream& in, Eigen::Index dimension = 0) {
  struct Row {
    double label;
    std::vector<std::pair<Eigen::Index, double>> entries;
  };
  std::vector<Row> rows;
  Eigen::Index max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string tok;
    if (!(ss >> tok)) continue;
    Row row;
    try {
      std::size_t used = 0;
      row.label = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ParseError("bad label '" + tok + "'", line_no);
    }
    Eigen::Index last = 0;
    while (ss >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError("expected idx:val, got '" + tok + "'", line_no);
      long long idx = 0;
      double val = 0.0;
      try {
        std::size_t used = 0;
        idx = std::stoll(tok.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument(tok);
        const std::string v = tok.substr(colon + 1);
        val = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("malformed feature '" + tok + "'", line_no);
      }
      if (idx < 1) throw ParseError("feature index must be >= 1", line_no);
      if (idx <= last) throw ParseError("feature indices must be strictly ascending", line_no);
      if (!std::isfinite(val)) throw ParseError("non-finite feature value", line_no);
      last = static_cast<Eigen::Index>(idx);
      row.entries.emplace_back(last, val);
    }
    max_index = std::max(max_index, last);
    rows.push_back(std::move(row));
  }
  if (dimension == 0) dimension = max_index;
  if (max_index > dimension)
    throw ParseError("feature index " + std::to_string(max_index) + " exceeds dimension " + std::to_string(dimension), 0);

  LabeledSamples out;
  out.X = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), dimension);
  out.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& [idx, val] : rows[r].entries) out.X(static_cast<Eigen::Index>(r), idx - 1) = val;
    out.labels.push_back(rows[r].label);
  }
  const auto cls = out.classes();
  if (cls.size() == 2 && !(cls[0] == -1.0 && cls[1] == 1.0))
    for (auto& l : out.labels) l = l == cls[0] ? -1.0 : 1.0;
  return out;
}

inline LabeledSamples load_sparse_text(const std::filesystem::path& path, Eigen::Index dimension = 0) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return parse_sparse_text(in, dimension);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

/// Writes SVMlight text; zeros are omitted and values use round-trip precision.
inline void write_sparse_text(std::ostream& out, const Matrix& x, const std::vector<double>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) throw std::invalid_argument("label count mismatch");
  std::ostringstream line;
  line.precision(17);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    line.str("");
    line << labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (x(i, j) != 0.0) line << ' ' << (j + 1) << ':' << x(i, j);
    out << line.str() << '\n';
  }
}

inline void write_sparse_text(const std::filesystem::path& path, const Matrix& x, const std::vector<double>& labels) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_sparse_text(out, x, labels);
}

namespace detail {
inline std::string class_name(double c) {
  std::ostringstream os;
  os << c;
  return os.str();
}
}  // namespace detail

/// One binary task per unordered class pair, classes in ascending order.
/// Within a pair the lower class becomes +1. A two-class input yields the
/// single binary problem unchanged (higher class +1).
inline MultiTaskDataset build_ovo_tasks(const LabeledSamples& samples, const std::string& source = "") {
  const auto cls = samples.classes();
  if (cls.size() < 2) throw DegenerateTaskError("one-vs-one needs at least two classes");
  MultiTaskDataset out;
  out.dimension = samples.X.cols();
  for (std::size_t a = 0; a < cls.size(); ++a) {
    for (std::size_t b = a + 1; b < cls.size(); ++b) {
      std::vector<Eigen::Index> idx;
      for (std::size_t i = 0; i < samples.labels.size(); ++i)
        if (samples.labels[i] == cls[a] || samples.labels[i] == cls[b]) idx.push_back(static_cast<Eigen::Index>(i));
      TaskDataset task;
      task.task_id = detail::class_name(cls[a]) + "_vs_" + detail::class_name(cls[b]);
      task.X = samples.X(idx, Eigen::all);
      task.y.resize(static_cast<Eigen::Index>(idx.size()));
      const double positive = cls.size() == 2 ? cls[b] : cls[a];
      for (std::size_t k = 0; k < idx.size(); ++k)
        task.y[static_cast<Eigen::Index>(k)] = samples.labels[static_cast<std::size_t>(idx[k])] == positive ? 1.0 : -1.0;
      task.source = source;
      out.tasks.push_back(std::move(task));
    }
  }
  return out;
}

namespace detail {
inline std::vector<Eigen::Index> indices_of(const Vector& y, double label) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] == label) idx.push_back(i);
  return idx;
}
}  // namespace detail

/// Subsamples the majority class without replacement down to the minority count.
/// Kept samples stay in their original order.
inline TaskDataset balanced_resample(const TaskDataset& task, std::uint64_t seed) {
  auto pos = detail::indices_of(task.y, 1.0);
  auto neg = detail::indices_of(task.y, -1.0);
  if (pos.empty() || neg.empty()) throw DegenerateTaskError("task " + task.task_id + " has an empty class");
  auto& major = pos.size() > neg.size() ? pos : neg;
  const std::size_t keep = std::min(pos.size(), neg.size());
  std::mt19937_64 rng(seed);
  std::shuffle(major.begin(), major.end(), rng);
  major.resize(keep);
  std::vector<Eigen::Index> idx(pos);
  idx.insert(idx.end(), neg.begin(), neg.end());
  std::sort(idx.begin(), idx.end());
  TaskDataset out = task.subset(idx);
  out.seed = seed;
  return out;
}

/// Per-class proportional split; round(fraction * n_class) samples of each
/// class go to training. Both halves keep the original sample order.
inline std::pair<TaskDataset, TaskDataset> stratified_split(const TaskDataset& task, double fraction,
                                                            std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split fraction must be in (0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> train, test;
  for (double label : {1.0, -1.0}) {
    auto idx = detail::indices_of(task.y, label);
    if (idx.empty()) continue;
    if (fraction * static_cast<double>(idx.size()) < 1.0 - 1e-12)
      throw DegenerateTaskError("task " + task.task_id + ": fraction " + std::to_string(fraction) +
                                " leaves no training sample of class " + std::to_string(static_cast<int>(label)));
    const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    std::shuffle(idx.begin(), idx.end(), rng);
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  TaskDataset tr = task.subset(train), te = task.subset(test);
  tr.seed = te.seed = seed;
  return {std::move(tr), std::move(te)};
}

/// Fold id in [0, folds) for every sample, dealt round-robin per class after a shuffle.
inline std::vector<int> stratified_folds(const Vector& y, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");
  std::vector<int> fold(static_cast<std::size_t>(y.size()), 0);
  std::mt19937_64 rng(seed);
  int offset = 0;
  for (double label : {1.0, -1.0}) {
    auto idx = detail::indices_of(y, label);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < idx.size(); ++k)
      fold[static_cast<std::size_t>(idx[k])] = static_cast<int>((k + static_cast<std::size_t>(offset)) % static_cast<std::size_t>(folds));
    offset += static_cast<int>(idx.size() % static_cast<std::size_t>(folds));
  }
  return fold;
}

/// Synthetic multi-task generator.
///
/// Recipe: draw a shared direction μ_s and per-task private directions μ_p,t
/// uniformly on the unit sphere of R^d. Task t uses
/// μ_t = normalize(similarity · μ_s + (1 - similarity) · μ_p,t). Each task holds
/// ceil(N/2) positives and floor(N/2) negatives, x = y · μ_t + σ_t · ε with
/// ε ~ N(0, I) and σ_t = noise · (1 + heterogeneity · (t/(T-1) - ½)), so
/// heterogeneity spreads the task noise levels around `noise`. Rows are shuffled.
struct SynthConfig {
  int tasks = 4;
  int samples_per_task = 40;
  int dimension = 5;
  double similarity = 0.5;
  double noise = 0.5;
  double heterogeneity = 0.0;
  std::uint64_t seed = 0;
};

struct SyntheticMultiTask {
  MultiTaskDataset data;
  Vector shared_direction;
  std::vector<Vector> directions;
};

inline SyntheticMultiTask synth_multitask(const SynthConfig& cfg) {
  if (cfg.tasks < 1 || cfg.samples_per_task < 2 || cfg.dimension < 1)
    throw std::invalid_argument("synth_multitask: need T >= 1, N >= 2, d >= 1");
  if (!(cfg.similarity >= 0.0 && cfg.similarity <= 1.0)) throw std::invalid_argument("similarity must be in [0, 1]");
  if (!(cfg.noise >= 0.0)) throw std::invalid_argument("noise must be nonnegative");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto unit = [&]() {
    Vector v(cfg.dimension);
    do {
      for (auto& e : v) e = gauss(rng);
    } while (v.norm() == 0.0);
    return Vector(v / v.norm());
  };

  SyntheticMultiTask out;
  out.shared_direction = unit();
  out.data.dimension = cfg.dimension;
  for (int t = 0; t < cfg.tasks; ++t) {
    const Vector priv = unit();
    Vector mu = cfg.similarity * out.shared_direction + (1.0 - cfg.similarity) * priv;
    mu = mu.norm() > 0.0 ? Vector(mu / mu.norm()) : priv;
    out.directions.push_back(mu);
    const double rel = cfg.tasks > 1 ? static_cast<double>(t) / (cfg.tasks - 1) - 0.5 : 0.0;
    const double sigma = cfg.noise * std::max(0.0, 1.0 + cfg.heterogeneity * rel);

    const int n = cfg.samples_per_task;
    TaskDataset task;
    task.task_id = "t" + std::to_string(t);
    task.X.resize(n, cfg.dimension);
    task.y.resize(n);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = 0; i < n; ++i) {
      const double label = i < (n + 1) / 2 ? 1.0 : -1.0;
      const int row = order[static_cast<std::size_t>(i)];
      for (int j = 0; j < cfg.dimension; ++j) task.X(row, j) = label * mu[j] + sigma * gauss(rng);
      task.y[row] = label;
    }
    task.source = "synthetic";
    task.seed = cfg.seed;
    out.data.tasks.push_back(std::move(task));
  }
  return out;
}

/// Multi-task container: one SVMlight file per task named task_<id>.txt and a
/// manifest.txt of "key = value" lines ("dimension = d", "tasks = id1 id2 ...").
inline void write_task_directory(const std::filesystem::path& dir, const MultiTaskDataset& data) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error("cannot write manifest in " + dir.string());
  manifest << "# multi-task dataset manifest\n";
  manifest << "dimension = " << data.dimension << "\ntasks =";
  for (const auto& t : data.tasks) {
    manifest << ' ' << t.task_id;
    std::vector<double> labels(t.y.data(), t.y.data() + t.y.size());
    write_sparse_text(dir / ("task_" + t.task_id + ".txt"), t.X, labels);
  }
  manifest << '\n';
}

inline MultiTaskDataset load_task_directory(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error("missing manifest.txt in " + dir.string());
  MultiTaskDataset out;
  std::vector<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw ParseError("manifest: expected key = value", line_no);
    }
    std::istringstream key_ss(line.substr(0, eq)), val_ss(line.substr(eq + 1));
    std::string key;
    key_ss >> key;
    if (key == "dimension") {
      if (!(val_ss >> out.dimension) || out.dimension < 1) throw ParseError("manifest: bad dimension", line_no);
    } else if (key == "tasks") {
      for (std::string id; val_ss >> id;) ids.push_back(id);
    } else {
      throw ParseError("manifest: unknown key '" + key + "'", line_no);
    }
  }
  if (out.dimension == 0) throw ParseError("manifest: dimension missing", 0);
  if (ids.empty()) throw ParseError("manifest: no tasks listed", 0);
  for (const auto& id : ids) {
    const auto path = dir / ("task_" + id + ".txt");
    auto samples = load_sparse_text(path, out.dimension);
    TaskDataset task;
    task.task_id = id;
    task.X = std::move(samples.X);
    task.y = Eigen::Map<const Vector>(samples.labels.data(), static_cast<Eigen::Index>(samples.labels.size()));
    task.source = path.string();
    out.tasks.push_back(std::move(task));
  }
  out.validate(false);
  return out;
}

}  // namespace conicmtl
