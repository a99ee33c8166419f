#pragma once

// Block-coordinate descent for Conic, Average and Pareto-Path multi-task MKL,
// the single-task baseline, and prediction.
//
// The objective is Σ_t λ_t J_t with
//   J_t = Σ_m ||w_t^m||² / (2 θ_m) + C Σ_i max(0, 1 - y_t^i f_t(x_t^i)).
// One outer iteration runs θ-step, λ-step, w-step; training starts with a
// w-step at uniform θ and λ = 1.

#include "conicmtl/block_steps.hpp"
#include "conicmtl/data.hpp"
#include "conicmtl/gram_cache.hpp"
#include "conicmtl/svm_dual.hpp"

#include <Eigen/Eigenvalues>

#include <optional>
#include <string>
#include <vector>

namespace conicmtl {

enum class Mode { kConic, kAverage, kParetoPath };

inline std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kConic: return "conic";
    case Mode::kAverage: return "average";
    case Mode::kParetoPath: return "pareto";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "conic") return Mode::kConic;
  if (s == "average") return Mode::kAverage;
  if (s == "pareto") return Mode::kParetoPath;
  throw std::invalid_argument("unknown mode '" + s + "' (conic|average|pareto)");
}

/// Weight vector used by the θ-step.
///   kExact:            u_m = Σ_t λ_t ||w_t^m||², the exact block minimizer.
///   kUnsquaredNormSum: u_m = Σ_t ||w_t^m||, the alternative rule; no descent guarantee.
enum class ThetaRule { kExact, kUnsquaredNormSum };

/// Case 0 < p < 1 of the Pareto-path weights.
///   kDerived: λ_t = (Σ_s f_s^p)^{(1-p)/p} / f_t^{1-p}, the inverse of the
///             minimizer of Σ f_t / ζ_t over the q-ball, q = p / (1 - p).
///   kLiteral: λ_t = Σ_s f_s^{(1-p)/p} / f_t^{1-p}. Not scale invariant and can
///             drop below 1 for small objectives.
enum class ParetoFormula { kDerived, kLiteral };

struct TrainConfig {
  double C = 1.0;
  double p = 2.0;
  double a = 1.0;
  double r_lambda = 8.0;
  Mode mode = Mode::kConic;
  double p_exp = 0.5;
  bool use_bias = false;
  double tol_rel_obj = 1e-5;
  int max_outer_iters = 50;
  std::uint64_t seed = 0;
  ThetaRule theta_rule = ThetaRule::kExact;
  ParetoFormula pareto_formula = ParetoFormula::kDerived;
  double pareto_damping = 0.5;
  double svm_rel_gap = 1e-11;

  void validate() const {
    if (!(C > 0.0)) throw std::invalid_argument("C must be positive");
    if (!(p >= 1.0)) throw std::invalid_argument("p must be >= 1");
    if (!(r_lambda > 1.0)) throw std::invalid_argument("r_lambda must exceed 1");
    if (mode == Mode::kConic && !(a > 0.0)) throw std::invalid_argument("budget a must be positive");
    if (mode == Mode::kParetoPath && !(p_exp > 0.0 && p_exp <= 1.0))
      throw std::invalid_argument("p_exp must be in (0, 1]");
    if (!(tol_rel_obj > 0.0)) throw std::invalid_argument("tol_rel_obj must be positive");
    if (max_outer_iters < 1) throw std::invalid_argument("max_outer_iters must be >= 1");
    if (!(pareto_damping >= 0.0 && pareto_damping < 1.0)) throw std::invalid_argument("pareto_damping in [0, 1)");
  }
};

/// Pareto-path task weights for objectives f ≻ 0 and exponent p > 0.
inline Vector pareto_lambda(const Vector& f, double p, ParetoFormula formula = ParetoFormula::kDerived) {
  if (!(p > 0.0)) throw std::invalid_argument("pareto exponent must be positive");
  if (f.size() == 0 || !(f.array() > 0.0).all() || !f.allFinite())
    throw std::invalid_argument("pareto_lambda needs strictly positive objectives");
  const Eigen::Index t = f.size();
  if (p == 1.0) return Vector::Ones(t);
  Vector out(t);
  if (p > 1.0) {
    const double denom = f.array().pow(p).sum();
    for (Eigen::Index i = 0; i < t; ++i) out[i] = std::pow(f[i], p - 1.0) / denom;
    return out;
  }
  if (formula == ParetoFormula::kLiteral) {
    const double num = f.array().pow((1.0 - p) / p).sum();
    for (Eigen::Index i = 0; i < t; ++i) out[i] = num / std::pow(f[i], 1.0 - p);
    return out;
  }
  // Written as (Σ_s (f_s/f_t)^p)^{(1-p)/p} so every entry is >= 1 exactly.
  for (Eigen::Index i = 0; i < t; ++i) {
    double acc = 0.0;
    for (Eigen::Index s = 0; s < t; ++s) acc += s == i ? 1.0 : std::pow(f[s] / f[i], p);
    out[i] = std::pow(acc, (1.0 - p) / p);
  }
  return out;
}

/// c_t = ||v_t||_{p*} for every task.
inline Vector budget_weights(const std::vector<GramStack>& stacks, double p) {
  const double q = dual_exponent(p);
  Vector c(static_cast<Eigen::Index>(stacks.size()));
  for (std::size_t t = 0; t < stacks.size(); ++t) c[static_cast<Eigen::Index>(t)] = lp_norm(stacks[t].traces(), q);
  return c;
}

enum class BlockStep { kW, kTheta, kLambda };

inline char block_step_code(BlockStep s) { return s == BlockStep::kW ? 'w' : (s == BlockStep::kTheta ? 't' : 'l'); }

struct BcdResult {
  ThetaWeights theta;
  LambdaWeights lambda;
  std::vector<DualSolution> duals;
  Vector budget_c;
  std::vector<double> objective_trace;
  std::vector<BlockStep> trace_steps;
  int outer_iterations = 0;
  bool converged = false;
};

/// Eigenvalue check of every base Gram of every stack, done once before training.
inline void check_stacks_psd(const std::vector<GramStack>& stacks, double tol = 1e-8) {
  for (const auto& s : stacks)
    for (Eigen::Index m = 0; m < s.size(); ++m) {
      const Matrix& g = s.gram(m);
      const double scale = std::max(1.0, g.diagonal().cwiseAbs().maxCoeff());
      if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw NotPsdError("task " + s.task_id() + ": Gram " + std::to_string(m) + " is not symmetric");
      Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -tol * scale)
        throw NotPsdError("task " + s.task_id() + ": Gram " + std::to_string(m) + " has eigenvalue " +
                          std::to_string(es.eigenvalues().minCoeff()));
    }
}

/// The BCD loop on precomputed Gram stacks. labels[t] holds ±1 labels of task t.
inline BcdResult run_bcd(const std::vector<GramStack>& stacks, const std::vector<Vector>& labels,
                         const TrainConfig& cfg) {
  cfg.validate();
  const auto T = static_cast<Eigen::Index>(stacks.size());
  if (T == 0) throw std::invalid_argument("no tasks to train");
  if (labels.size() != stacks.size()) throw std::invalid_argument("labels and stacks differ in task count");
  const Eigen::Index M = stacks.front().size();
  for (std::size_t t = 0; t < stacks.size(); ++t) {
    if (stacks[t].size() != M) throw std::invalid_argument("every task needs the same kernel count");
    if (labels[t].size() != stacks[t].samples()) throw std::invalid_argument("labels do not match Gram size");
    const auto pos = (labels[t].array() == 1.0).count(), neg = (labels[t].array() == -1.0).count();
    if (pos + neg != labels[t].size()) throw std::invalid_argument("labels must be +1/-1");
    if (pos == 0 || neg == 0) throw DegenerateTaskError("task " + stacks[t].task_id() + " lacks one class");
  }
  check_stacks_psd(stacks);

  SvmOptions svm;
  svm.use_bias = cfg.use_bias;
  svm.gap_tol = 0.0;
  svm.rel_gap_tol = cfg.svm_rel_gap;
  svm.check_psd = false;

  BcdResult res;
  res.theta = ThetaWeights::uniform(M, cfg.p);
  res.lambda = LambdaWeights::ones(T, cfg.r_lambda, cfg.a);
  res.budget_c = budget_weights(stacks, cfg.p);
  res.duals.resize(stacks.size());
  Vector j(T);
  bool svm_ok = true;

  auto objective = [&]() { return res.lambda.values.dot(j); };
  auto record = [&](BlockStep s) {
    res.objective_trace.push_back(objective());
    res.trace_steps.push_back(s);
  };
  auto w_step = [&]() {
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto& stack = stacks[static_cast<std::size_t>(t)];
      const auto& y = labels[static_cast<std::size_t>(t)];
      auto& d = res.duals[static_cast<std::size_t>(t)];
      d = solve_svm_dual(combine(stack, res.theta), y, cfg.C, svm);
      d.component_sq_norms = component_sq_norms(d.alpha, y, stack, res.theta);
      j[t] = d.objective;
      svm_ok = svm_ok && d.converged;
    }
  };

  w_step();
  // λ = 1 need not meet the budget; start from the best feasible λ for the
  // initial solution so every recorded step is a descent step.
  if (cfg.mode == Mode::kConic) res.lambda = lambda_step(j, res.budget_c, cfg.a, cfg.r_lambda);
  record(BlockStep::kW);
  double prev = objective();

  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    res.outer_iterations = it;
    svm_ok = true;

    Vector u = Vector::Zero(M);
    for (Eigen::Index t = 0; t < T; ++t) {
      const Vector& n = res.duals[static_cast<std::size_t>(t)].component_sq_norms;
      if (cfg.theta_rule == ThetaRule::kExact) u += res.lambda.values[t] * n;
      else u += n.cwiseSqrt();
    }
    if ((u.array() > 0.0).any()) {
      res.theta = theta_step(u, cfg.p);
      for (Eigen::Index t = 0; t < T; ++t) {
        auto& d = res.duals[static_cast<std::size_t>(t)];
        d.regularizer = theta_objective(d.component_sq_norms, res.theta.values);
        d.objective = d.regularizer + cfg.C * d.hinge_sum;
        j[t] = d.objective;
      }
    }
    record(BlockStep::kTheta);

    switch (cfg.mode) {
      case Mode::kConic: res.lambda = lambda_step(j, res.budget_c, cfg.a, cfg.r_lambda); break;
      case Mode::kAverage: break;
      case Mode::kParetoPath: {
        const Vector target = pareto_lambda(j, cfg.p_exp, cfg.pareto_formula);
        res.lambda.values = cfg.pareto_damping * res.lambda.values + (1.0 - cfg.pareto_damping) * target;
        break;
      }
    }
    record(BlockStep::kLambda);

    w_step();
    record(BlockStep::kW);

    const double cur = objective();
    if (std::abs(prev - cur) <= cfg.tol_rel_obj * std::max(std::abs(prev), 1e-300)) {
      res.converged = svm_ok;
      break;
    }
    prev = cur;
  }
  return res;
}

/// Steps of a trace that increase the objective by more than rel_tol relative.
inline std::vector<std::size_t> trace_increases(const std::vector<double>& trace, double rel_tol = 1e-9) {
  std::vector<std::size_t> bad;
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] > trace[i - 1] + rel_tol * std::max(std::abs(trace[i - 1]), 1e-300)) bad.push_back(i);
  return bad;
}

/// Standardized task data with its Gram stack, ready for training.
struct TrainingSet {
  std::vector<KernelSpec> kernels;
  std::vector<TaskDataset> tasks;
  std::vector<Standardizer> standardizers;
  std::vector<GramStack> stacks;

  std::size_t size() const { return tasks.size(); }

  std::vector<Vector> labels() const {
    std::vector<Vector> out;
    for (const auto& t : tasks) out.push_back(t.y);
    return out;
  }

  /// Restriction of each task to the given sample indices, reusing Grams and standardizers.
  TrainingSet subset(const std::vector<std::vector<Eigen::Index>>& idx) const {
    if (idx.size() != tasks.size()) throw std::invalid_argument("one index list per task expected");
    TrainingSet out{kernels, {}, standardizers, {}};
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      out.tasks.push_back(tasks[t].subset(idx[t]));
      out.stacks.push_back(stacks[t].subset(idx[t]));
    }
    return out;
  }

  TrainingSet single(std::size_t t) const { return {kernels, {tasks.at(t)}, {standardizers.at(t)}, {stacks.at(t)}}; }
};

/// Standardizes each task on its own samples (optional) and builds its Gram stack.
inline TrainingSet prepare_training_set(const std::vector<TaskDataset>& tasks, const std::vector<KernelSpec>& kernels,
                                        bool standardize = true, GramCache* cache = nullptr) {
  if (kernels.empty()) throw std::invalid_argument("at least one kernel is required");
  for (const auto& k : kernels) k.validate();
  TrainingSet out;
  out.kernels = kernels;
  for (const auto& task : tasks) {
    task.validate(false);
    Standardizer s = standardize ? Standardizer::fit(task.X) : Standardizer::identity(task.X.cols());
    TaskDataset std_task = task;
    std_task.X = s.apply(task.X);
    out.stacks.push_back(cache ? cache->build_stack(task.task_id, kernels, std_task.X)
                               : GramStack::build(task.task_id, kernels, std_task.X));
    out.tasks.push_back(std::move(std_task));
    out.standardizers.push_back(std::move(s));
  }
  return out;
}

/// Content hash of a task's training samples (features and labels).
inline std::uint64_t training_hash(const Matrix& x, const Vector& y) {
  detail::Fnv1a h;
  h.update_le(static_cast<std::uint64_t>(x.rows()));
  h.update_le(static_cast<std::uint64_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index k = 0; k < x.cols(); ++k) h.update_le(x(i, k));
  for (Eigen::Index i = 0; i < y.size(); ++i) h.update_le(y[i]);
  return h.digest();
}

struct TaskModel {
  std::string task_id;
  Matrix train_x;  // standardized training features
  Vector train_y;
  Standardizer standardizer;
  DualSolution dual;
  Vector train_decision;  // f_t on the training samples
  std::uint64_t train_hash = 0;
};

struct MtlModel {
  std::vector<KernelSpec> kernels;
  ThetaWeights theta;
  LambdaWeights lambda;
  Vector budget_c;
  std::vector<TaskModel> tasks;
  std::vector<double> objective_trace;
  std::vector<BlockStep> trace_steps;
  TrainConfig config;
  int outer_iterations = 0;
  bool converged = false;

  double objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }

  std::size_t task_index(const std::string& id) const {
    for (std::size_t t = 0; t < tasks.size(); ++t)
      if (tasks[t].task_id == id) return t;
    throw std::out_of_range("unknown task id '" + id + "'");
  }

  /// Σ_t λ_t ||w_t||² with ||w_t||² = Σ_m ||w_t^m||² / θ_m.
  double weighted_sq_norm() const {
    double r = 0.0;
    for (std::size_t t = 0; t < tasks.size(); ++t)
      r += lambda.values[static_cast<Eigen::Index>(t)] * 2.0 * theta_objective(tasks[t].dual.component_sq_norms, theta.values);
    return r;
  }
};

/// Trains on a prepared set.
inline MtlModel fit(const TrainingSet& set, const TrainConfig& cfg) {
  BcdResult r = run_bcd(set.stacks, set.labels(), cfg);
  MtlModel model;
  model.kernels = set.kernels;
  model.theta = r.theta;
  model.lambda = r.lambda;
  model.budget_c = r.budget_c;
  model.objective_trace = std::move(r.objective_trace);
  model.trace_steps = std::move(r.trace_steps);
  model.config = cfg;
  model.outer_iterations = r.outer_iterations;
  model.converged = r.converged;
  for (std::size_t t = 0; t < set.size(); ++t) {
    TaskModel tm;
    tm.task_id = set.tasks[t].task_id;
    tm.train_x = set.tasks[t].X;
    tm.train_y = set.tasks[t].y;
    tm.standardizer = set.standardizers[t];
    tm.dual = std::move(r.duals[t]);
    tm.train_decision = decision_values(combine(set.stacks[t], model.theta), tm.train_y, tm.dual.alpha, tm.dual.bias);
    tm.train_hash = training_hash(tm.train_x, tm.train_y);
    model.tasks.push_back(std::move(tm));
  }
  return model;
}

inline MtlModel fit(const std::vector<TaskDataset>& tasks, const std::vector<KernelSpec>& kernels,
                    const TrainConfig& cfg, bool standardize = true) {
  return fit(prepare_training_set(tasks, kernels, standardize), cfg);
}

/// Lp-MKL on one task alone: same loop with T = 1 and λ = 1.
inline MtlModel fit_single_task(const TrainingSet& set, std::size_t t, TrainConfig cfg) {
  cfg.mode = Mode::kAverage;
  return fit(set.single(t), cfg);
}

struct Prediction {
  Vector decision;
  Vector labels;
};

/// f_t(x) = Σ_i α_i y_i k_θ(x_i, x) + b on raw (unstandardized) features; sign(0) = +1.
inline Prediction predict(const MtlModel& model, const std::string& task_id, const Matrix& x_raw) {
  const TaskModel& tm = model.tasks[model.task_index(task_id)];
  if (x_raw.cols() != tm.train_x.cols())
    throw std::invalid_argument("feature dimension " + std::to_string(x_raw.cols()) + " does not match training (" +
                                std::to_string(tm.train_x.cols()) + ")");
  const Matrix x = tm.standardizer.apply(x_raw);
  const Vector beta = tm.dual.alpha.cwiseProduct(tm.train_y);
  Prediction out;
  out.decision = Vector::Constant(x.rows(), tm.dual.bias);
  for (std::size_t m = 0; m < model.kernels.size(); ++m) {
    const double th = model.theta.values[static_cast<Eigen::Index>(m)];
    if (th == 0.0) continue;
    out.decision.noalias() += th * (compute_gram(model.kernels[m], x, tm.train_x) * beta);
  }
  out.labels = out.decision.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
  return out;
}

/// Fraction of correctly labeled samples.
inline double accuracy(const Vector& predicted, const Vector& truth) {
  if (predicted.size() != truth.size() || truth.size() == 0) throw std::invalid_argument("accuracy: size mismatch");
  return static_cast<double>((predicted.array() == truth.array()).count()) / static_cast<double>(truth.size());
}

}  // namespace conicmtl
