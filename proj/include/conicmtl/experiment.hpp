#pragma once

// Repeated train/test comparisons of the multi-task methods with inner
// cross-validation, CSV output and a significance summary.

#include "conicmtl/bounds.hpp"
#include "conicmtl/stats.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace conicmtl {

enum class Method { kConic, kAverage, kParetoPath, kSingleTask };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kConic: return "conic";
    case Method::kAverage: return "average";
    case Method::kParetoPath: return "pareto";
    case Method::kSingleTask: return "single";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "conic") return Method::kConic;
  if (s == "average") return Method::kAverage;
  if (s == "pareto") return Method::kParetoPath;
  if (s == "single") return Method::kSingleTask;
  throw std::invalid_argument("unknown method '" + s + "' (conic|average|pareto|single)");
}

/// Where the tasks come from.
///   synthetic:  generated with `synth` (seeded by the master seed)
///   taskdir:    directory with manifest.txt and task_<id>.txt files
///   multiclass: one SVMlight file, split one-vs-one
struct DatasetSpec {
  std::string kind = "synthetic";
  std::string path;
  std::string name = "synthetic";
  SynthConfig synth;
  bool balance = false;  // balanced resample of every task before the split, redrawn per run
};

inline MultiTaskDataset load_dataset(const DatasetSpec& spec, std::uint64_t master_seed) {
  if (spec.kind == "synthetic") {
    SynthConfig sc = spec.synth;
    sc.seed = derive_seed(master_seed, 0x5e7);
    return synth_multitask(sc).data;
  }
  if (spec.kind == "taskdir") return load_task_directory(spec.path);
  if (spec.kind == "multiclass") {
    std::ifstream probe(spec.path);
    if (!probe) throw Error("dataset file not found: " + spec.path);
    return build_ovo_tasks(load_sparse_text(spec.path), spec.path);
  }
  throw std::invalid_argument("unknown dataset kind '" + spec.kind + "' (synthetic|taskdir|multiclass)");
}

/// Candidate values; `a_fraction` scales Σ_t ||v_t||_{p*}, the budget at λ = 1.
struct HyperGrid {
  std::vector<double> C{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  std::vector<double> p{1.0, 4.0 / 3.0, 2.0, 4.0};
  std::vector<double> a_fraction{0.25, 0.5, 0.75, 1.0};
  std::vector<double> p_exp{0.25, 0.5, 0.75, 1.0};

  void validate() const {
    if (C.empty() || p.empty() || a_fraction.empty() || p_exp.empty()) throw std::invalid_argument("empty grid");
    for (double c : C)
      if (!(c > 0.0)) throw std::invalid_argument("grid C values must be positive");
    for (double v : p)
      if (!(v >= 1.0)) throw std::invalid_argument("grid p values must be >= 1");
    for (double v : a_fraction)
      if (!(v > 0.0)) throw std::invalid_argument("grid a fractions must be positive");
    for (double v : p_exp)
      if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument("grid p_exp values must be in (0, 1]");
  }
};

struct HyperParams {
  double C = 1.0;
  double p = 2.0;
  std::optional<double> a_fraction;
  std::optional<double> p_exp;
  double cv_score = kInf;  // infinite when CV was skipped
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<double> fractions{0.3};
  std::vector<Method> methods{Method::kConic, Method::kAverage, Method::kParetoPath, Method::kSingleTask};
  int runs = 20;
  int cv_folds = 5;
  HyperGrid grid;
  double r_lambda = 8.0;
  std::uint64_t master_seed = 0;
  std::vector<KernelSpec> kernels = default_dictionary();
  TrainConfig base;  // C, p, a, mode and p_exp are overwritten per method and grid point
  bool timing = false;
  bool bounds = false;  // compute a bound report for every multi-task model
  BoundOptions bound_options{1.0, 0.05, 2000, 0, std::nullopt};
  std::string gram_cache_dir;

  void validate() const {
    if (runs < 1) throw std::invalid_argument("runs must be >= 1");
    if (cv_folds < 2) throw std::invalid_argument("cv_folds must be >= 2");
    if (fractions.empty()) throw std::invalid_argument("no training fractions");
    for (double f : fractions)
      if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("fractions must be in (0, 1)");
    if (methods.empty()) throw std::invalid_argument("no methods");
    if (kernels.empty()) throw std::invalid_argument("no kernels");
    if (!(r_lambda > 1.0)) throw std::invalid_argument("r_lambda must exceed 1");
    grid.validate();
  }
};

struct ResultRow {
  std::string dataset;
  double fraction = 0.0;
  Method method = Method::kConic;
  std::uint64_t seed = 0;
  double mean_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<std::string, double>> task_accuracies;
  HyperParams params;
  double wall_ms = 0.0;
  bool converged = false;
  std::string error;
  std::optional<BoundReport> bound;
};

using ResultTable = std::vector<ResultRow>;

namespace detail {

/// Shortest decimal text that reads back to the same double.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  for (int prec : {6, 10, 15, 17}) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    if (std::stod(os.str()) == v) return os.str();
  }
  return "";
}

/// Decision values on samples `eval` of a task from Gram sub-blocks against samples `train`.
inline Vector decision_from_stack(const GramStack& stack, const ThetaWeights& theta, const std::vector<Eigen::Index>& eval,
                                  const std::vector<Eigen::Index>& train, const Vector& alpha, const Vector& y,
                                  double bias) {
  const Vector beta = alpha.cwiseProduct(y);
  Vector f = Vector::Constant(static_cast<Eigen::Index>(eval.size()), bias);
  for (Eigen::Index m = 0; m < stack.size(); ++m) {
    const double th = theta.values[m];
    if (th == 0.0) continue;
    f.noalias() += th * (stack.gram(m)(eval, train) * beta);
  }
  return f;
}

inline double accuracy_of(const Vector& f, const Vector& y) {
  Eigen::Index ok = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) ok += (f[i] >= 0.0 ? 1.0 : -1.0) == y[i];
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

inline TrainConfig config_for(const ExperimentConfig& ex, Method method, const HyperParams& hp,
                              const std::vector<GramStack>& stacks) {
  TrainConfig c = ex.base;
  c.C = hp.C;
  c.p = hp.p;
  c.r_lambda = ex.r_lambda;
  switch (method) {
    case Method::kConic:
      c.mode = Mode::kConic;
      c.a = *hp.a_fraction * budget_weights(stacks, hp.p).sum();
      break;
    case Method::kAverage:
    case Method::kSingleTask:
      c.mode = Mode::kAverage;
      break;
    case Method::kParetoPath:
      c.mode = Mode::kParetoPath;
      c.p_exp = *hp.p_exp;
      break;
  }
  return c;
}

/// Trains `method` on `set` and returns per-task models (one for multi-task methods, T for single-task).
inline std::vector<MtlModel> train_method(const TrainingSet& set, Method method, const HyperParams& hp,
                                          const ExperimentConfig& ex) {
  std::vector<MtlModel> out;
  if (method == Method::kSingleTask) {
    for (std::size_t t = 0; t < set.size(); ++t) {
      const TrainingSet one = set.single(t);
      out.push_back(fit(one, config_for(ex, method, hp, one.stacks)));
    }
  } else {
    out.push_back(fit(set, config_for(ex, method, hp, set.stacks)));
  }
  return out;
}

inline std::vector<HyperParams> grid_points(Method method, const HyperGrid& g) {
  auto sorted = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  const auto cs = sorted(g.C), ps = sorted(g.p), as = sorted(g.a_fraction), es = sorted(g.p_exp);
  std::vector<HyperParams> pts;
  for (double c : cs)
    for (double p : ps) {
      if (method == Method::kConic) {
        for (double a : as) pts.push_back({c, p, a, std::nullopt});
      } else if (method == Method::kParetoPath) {
        for (double e : es) pts.push_back({c, p, std::nullopt, e});
      } else {
        pts.push_back({c, p, std::nullopt, std::nullopt});
      }
    }
  return pts;
}

}  // namespace detail

/// Exhaustive grid search by k-fold cross-validation on a prepared training set.
///
/// Folds are stratified per task. The score of a grid point is the mean over
/// folds of the mean task accuracy on the held-out fold; the first maximum in
/// (C, p, a, p_exp) ascending order wins. A one-point grid is returned without
/// training. When a class has fewer samples than `folds`, the fold count drops
/// to the smallest class size; below 2 a DegenerateTaskError is raised.
inline HyperParams cross_validate(const TrainingSet& set, Method method, const ExperimentConfig& ex, int folds,
                                  std::uint64_t seed, const std::vector<std::vector<int>>* fold_override = nullptr) {
  const auto points = detail::grid_points(method, ex.grid);
  if (points.size() == 1) return points.front();

  std::vector<std::vector<int>> fold_of;
  if (fold_override) {
    fold_of = *fold_override;
    folds = 0;
    for (const auto& f : fold_of) folds = std::max(folds, *std::max_element(f.begin(), f.end()) + 1);
  } else {
    for (const auto& task : set.tasks)
      folds = static_cast<int>(std::min<Eigen::Index>(folds, std::min(task.count(1.0), task.count(-1.0))));
    if (folds < 2) throw DegenerateTaskError("too few samples per class for cross-validation");
    for (std::size_t t = 0; t < set.size(); ++t)
      fold_of.push_back(stratified_folds(set.tasks[t].y, folds, derive_seed(seed, t)));
  }

  struct FoldData {
    TrainingSet train;
    std::vector<std::vector<Eigen::Index>> train_idx, val_idx;
  };
  std::vector<FoldData> fold_data;
  for (int f = 0; f < folds; ++f) {
    FoldData fd;
    for (std::size_t t = 0; t < set.size(); ++t) {
      std::vector<Eigen::Index> tr, va;
      for (std::size_t i = 0; i < fold_of[t].size(); ++i)
        (fold_of[t][i] == f ? va : tr).push_back(static_cast<Eigen::Index>(i));
      if (va.empty()) throw DegenerateTaskError("empty validation fold in task " + set.tasks[t].task_id);
      fd.train_idx.push_back(std::move(tr));
      fd.val_idx.push_back(std::move(va));
    }
    fd.train = set.subset(fd.train_idx);
    fold_data.push_back(std::move(fd));
  }

  HyperParams best = points.front();
  double best_score = -kInf;
  for (const auto& hp : points) {
    double total = 0.0;
    for (const auto& fd : fold_data) {
      const auto models = detail::train_method(fd.train, method, hp, ex);
      double fold_acc = 0.0;
      for (std::size_t t = 0; t < set.size(); ++t) {
        const MtlModel& m = models.size() == 1 ? models.front() : models[t];
        const TaskModel& tm = m.tasks[models.size() == 1 ? t : 0];
        const Vector f = detail::decision_from_stack(set.stacks[t], m.theta, fd.val_idx[t], fd.train_idx[t],
                                                     tm.dual.alpha, tm.train_y, tm.dual.bias);
        fold_acc += detail::accuracy_of(f, set.tasks[t].y(fd.val_idx[t]));
      }
      total += fold_acc / static_cast<double>(set.size());
    }
    const double score = total / static_cast<double>(fold_data.size());
    if (score > best_score) {
      best_score = score;
      best = hp;
    }
  }
  best.cv_score = best_score;
  return best;
}

/// Runs every (fraction, run, method) combination. Failures are recorded in the row.
inline ResultTable run_experiment(const ExperimentConfig& ex) {
  ex.validate();
  const MultiTaskDataset data = load_dataset(ex.dataset, ex.master_seed);
  data.validate(true);
  std::optional<GramCache> cache;
  if (!ex.gram_cache_dir.empty()) cache.emplace(ex.gram_cache_dir);

  ResultTable table;
  for (std::size_t fi = 0; fi < ex.fractions.size(); ++fi) {
    const double fraction = ex.fractions[fi];
    for (int run = 0; run < ex.runs; ++run) {
      const std::uint64_t seed = derive_seed(derive_seed(ex.master_seed, fi), static_cast<std::uint64_t>(run));
      std::optional<TrainingSet> set;
      std::vector<TaskDataset> test;
      std::optional<SignTable> signs;
      std::string prep_error;
      try {
        std::vector<TaskDataset> train;
        for (std::size_t t = 0; t < data.tasks.size(); ++t) {
          TaskDataset task = data.tasks[t];
          if (ex.dataset.balance) task = balanced_resample(task, derive_seed(seed, 1000 + t));
          auto [tr, te] = stratified_split(task, fraction, derive_seed(seed, t));
          if (te.size() == 0) throw DegenerateTaskError("task " + task.task_id + " has no test samples");
          train.push_back(std::move(tr));
          test.push_back(std::move(te));
        }
        set = prepare_training_set(train, ex.kernels, true, cache ? &*cache : nullptr);
        if (ex.bounds) signs.emplace(set->stacks, ex.bound_options.mc_samples, derive_seed(seed, 3000));
      } catch (const std::exception& e) {
        prep_error = e.what();
      }

      for (Method method : ex.methods) {
        ResultRow row;
        row.dataset = ex.dataset.name;
        row.fraction = fraction;
        row.method = method;
        row.seed = seed;
        const auto start = std::chrono::steady_clock::now();
        try {
          if (!set) throw Error(prep_error);
          row.params = cross_validate(*set, method, ex, ex.cv_folds, derive_seed(seed, 2000));
          const auto models = detail::train_method(*set, method, row.params, ex);
          double acc_sum = 0.0;
          row.converged = true;
          for (std::size_t t = 0; t < test.size(); ++t) {
            const MtlModel& m = models.size() == 1 ? models.front() : models[t];
            const double acc = accuracy(predict(m, test[t].task_id, test[t].X).labels, test[t].y);
            row.task_accuracies.emplace_back(test[t].task_id, acc);
            acc_sum += acc;
          }
          for (const auto& m : models) row.converged = row.converged && m.converged;
          row.mean_accuracy = acc_sum / static_cast<double>(test.size());
          if (signs && models.size() == 1) {
            row.bound = bound_report(models.front(), set->stacks, *signs, ex.bound_options);
            row.bound->test_error = 1.0 - row.mean_accuracy;
          }
        } catch (const std::exception& e) {
          row.error = e.what();
          row.mean_accuracy = std::numeric_limits<double>::quiet_NaN();
          row.converged = false;
        }
        if (ex.timing)
          row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        table.push_back(std::move(row));
      }
    }
  }
  return table;
}

inline constexpr const char* kResultsHeader = "dataset,fraction,method,seed,mean_accuracy,C,p,a,p_exp,wall_ms,converged";

/// Results CSV; `a` holds the budget fraction, inapplicable cells stay empty.
inline void write_results_csv(std::ostream& os, const ResultTable& table) {
  os << kResultsHeader << '\n';
  for (const auto& r : table) {
    const bool ok = r.error.empty();
    os << r.dataset << ',' << detail::fmt(r.fraction) << ',' << method_name(r.method) << ',' << r.seed << ','
       << detail::fmt(r.mean_accuracy) << ',' << (ok ? detail::fmt(r.params.C) : "") << ','
       << (ok ? detail::fmt(r.params.p) : "") << ',' << (ok && r.params.a_fraction ? detail::fmt(*r.params.a_fraction) : "")
       << ',' << (ok && r.params.p_exp ? detail::fmt(*r.params.p_exp) : "") << ',' << detail::fmt(r.wall_ms) << ','
       << (r.converged ? 1 : 0) << '\n';
  }
}

/// Per-task accuracies and error messages, one line per (row, task).
inline void write_task_csv(std::ostream& os, const ResultTable& table) {
  os << "dataset,fraction,method,seed,task,accuracy,error\n";
  for (const auto& r : table) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    if (r.task_accuracies.empty())
      os << r.dataset << ',' << detail::fmt(r.fraction) << ',' << method_name(r.method) << ',' << r.seed << ",,nan,"
         << err << '\n';
    for (const auto& [id, acc] : r.task_accuracies)
      os << r.dataset << ',' << detail::fmt(r.fraction) << ',' << method_name(r.method) << ',' << r.seed << ',' << id
         << ',' << detail::fmt(acc) << ',' << err << '\n';
  }
}

/// Bound reports of the multi-task rows.
inline void write_bounds_csv(std::ostream& os, const ResultTable& table) {
  bool header = false;
  for (const auto& r : table) {
    if (!r.bound) continue;
    if (!header) {
      os << "dataset,fraction,method,seed," << r.bound->csv_header() << '\n';
      header = true;
    }
    os << r.dataset << ',' << detail::fmt(r.fraction) << ',' << method_name(r.method) << ',' << r.seed << ','
       << r.bound->csv_row() << '\n';
  }
}

/// One parsed row of a results CSV, as needed by the summary.
struct CsvResult {
  std::string dataset;
  std::string fraction;
  std::string method;
  std::string seed;
  double mean_accuracy = 0.0;
};

inline std::vector<CsvResult> read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader) throw ParseError("results CSV header mismatch", 1);
  std::vector<CsvResult> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 11) throw ParseError("expected 11 columns", line_no);
    CsvResult r{cells[0], cells[1], cells[2], cells[3], 0.0};
    try {
      r.mean_accuracy = cells[4] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[4]);
    } catch (const std::exception&) {
      throw ParseError("bad mean_accuracy '" + cells[4] + "'", line_no);
    }
    out.push_back(std::move(r));
  }
  return out;
}

struct SummaryOptions {
  bool paired = false;
  double alpha = 0.05;
  std::string reference = "conic";
};

/// Table of mean ± std accuracy (in %) per (dataset, fraction) row and method
/// column. '^' marks the best mean of a row, '*' a mean significantly below
/// the reference method (two-sided t-test at level alpha). Failed runs (nan)
/// are left out of the statistics and counted in the footer.
inline void write_summary(std::ostream& os, const std::vector<CsvResult>& rows, const SummaryOptions& opt = {}) {
  std::vector<std::string> methods;
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<std::pair<std::string, double>>>> cells;
  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    const auto key = std::make_pair(r.dataset, r.fraction);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    if (std::isnan(r.mean_accuracy)) {
      ++failed;
      continue;
    }
    cells[key][r.method].emplace_back(r.seed, r.mean_accuracy);
  }

  os << std::left << std::setw(24) << "dataset@fraction";
  for (const auto& m : methods) os << std::setw(20) << m;
  os << '\n';
  for (const auto& key : keys) {
    auto& row = cells[key];
    double best = -kInf;
    std::map<std::string, std::pair<double, double>> stats;
    for (const auto& m : methods) {
      const auto& v = row[m];
      if (v.empty()) continue;
      double mean = 0.0;
      for (const auto& [s, a] : v) mean += a;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (const auto& [s, a] : v) var += (a - mean) * (a - mean);
      const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
      stats[m] = {mean, sd};
      best = std::max(best, mean);
    }
    os << std::setw(24) << (key.first + "@" + key.second);
    for (const auto& m : methods) {
      if (!stats.count(m)) {
        os << std::setw(20) << "-";
        continue;
      }
      const auto [mean, sd] = stats[m];
      std::string marks;
      if (mean == best) marks += '^';
      const auto& ref = row[opt.reference];
      const auto& mine = row[m];
      if (m != opt.reference && ref.size() >= 2 && mine.size() >= 2) {
        std::vector<double> a, b;
        if (opt.paired) {
          std::map<std::string, double> ref_by_seed(ref.begin(), ref.end());
          for (const auto& [s, acc] : mine)
            if (ref_by_seed.count(s)) a.push_back(acc), b.push_back(ref_by_seed[s]);
        } else {
          for (const auto& [s, acc] : mine) a.push_back(acc);
          for (const auto& [s, acc] : ref) b.push_back(acc);
        }
        if (a.size() >= 2) {
          const TTestResult tt = opt.paired ? paired_t_test(a, b) : welch_t_test(a, b);
          if (tt.p_value < opt.alpha && tt.t < 0.0) marks += '*';
        }
      }
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(2) << 100.0 * mean << "±" << 100.0 * sd << marks;
      os << std::setw(20) << cell.str();
    }
    os << '\n';
  }
  os << "\n^ best mean in row; * significantly worse than " << opt.reference << " ("
     << (opt.paired ? "paired" : "Welch") << " t-test, alpha = " << opt.alpha << ")\n";
  if (failed) os << failed << " failed run(s) excluded\n";
}

}  // namespace conicmtl
