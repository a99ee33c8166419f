#pragma once

// Generalization-bound terms and Rademacher-complexity estimation.
//
// For sign vectors σ_t the supremum over {Σ_t λ_t ||w_t||² <= R, θ >= 0,
// ||θ||_p <= 1} of Σ_t Σ_i γ_t σ_t^i f_t(x_t^i) is sqrt(R ||u(σ)||_{p*}) with
// u_m(σ) = Σ_t (γ_t² / λ_t) σ_t' K_t^m σ_t, so the only error of the estimate
// is the expectation over σ. Up to 20 signs in total are enumerated exactly.

#include "conicmtl/trainer.hpp"

#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace conicmtl {

/// Ramp loss: 0 for x >= ρ, 1 - x/ρ on [0, ρ], 1 for x <= 0.
inline double margin_loss(double x, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  if (x >= rho) return 0.0;
  if (x <= 0.0) return 1.0;
  return 1.0 - x / rho;
}

/// (1/T) Σ_t (λ_t / N_t) Σ_i l_ρ(y_t^i f_t(x_t^i)); equals (1/(TN)) Σ_t Σ_i λ_t l_ρ(.) for equal N_t.
inline double weighted_empirical_loss(const std::vector<Vector>& decision, const std::vector<Vector>& y,
                                      const Vector& lambda, double rho) {
  if (decision.size() != y.size() || static_cast<Eigen::Index>(y.size()) != lambda.size() || y.empty())
    throw std::invalid_argument("weighted_empirical_loss: size mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y[t].size(); ++i) acc += margin_loss(y[t][i] * decision[t][i], rho);
    total += lambda[static_cast<Eigen::Index>(t)] * acc / static_cast<double>(y[t].size());
  }
  return total / static_cast<double>(y.size());
}

inline double weighted_empirical_loss(const MtlModel& model, double rho) {
  std::vector<Vector> f, y;
  for (const auto& t : model.tasks) {
    f.push_back(t.train_decision);
    y.push_back(t.train_y);
  }
  return weighted_empirical_loss(f, y, model.lambda.values, rho);
}

struct RademacherEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long samples = 0;
  bool exhaustive = false;
};

/// Per-σ quadratic forms q_t^m(σ) = σ_t' K_t^m σ_t for a fixed set of sign draws.
///
/// With at most `exhaustive_limit` signs in total every pattern is enumerated
/// (each with weight 2^{-TN}); otherwise `samples` patterns are drawn from a
/// counter-based stream so that draw s depends only on (seed, s).
class SignTable {
 public:
  SignTable(const std::vector<GramStack>& stacks, long samples, std::uint64_t seed, int exhaustive_limit = 20) {
    if (stacks.empty()) throw std::invalid_argument("no Gram stacks given");
    m_ = stacks.front().size();
    Eigen::Index total = 0;
    for (const auto& s : stacks) {
      if (s.size() != m_) throw std::invalid_argument("every task needs the same kernel count");
      if (s.samples() == 0) throw std::invalid_argument("empty task in Rademacher estimate");
      total += s.samples();
    }
    t_ = static_cast<Eigen::Index>(stacks.size());
    total_samples_ = total;
    if (total <= exhaustive_limit) {
      build_exhaustive(stacks);
    } else {
      if (samples < 1) throw std::invalid_argument("need at least one Monte-Carlo sample");
      build_sampled(stacks, samples, seed);
    }
  }

  bool exhaustive() const { return exhaustive_; }
  long draws() const { return draws_; }
  Eigen::Index tasks() const { return t_; }
  Eigen::Index kernels() const { return m_; }
  Eigen::Index total_samples() const { return total_samples_; }

  /// Per-draw values g(s) reduced to mean and standard error, in draw order.
  template <typename PerDraw>
  RademacherEstimate reduce(PerDraw&& per_draw) const {
    RademacherEstimate est;
    est.exhaustive = exhaustive_;
    est.samples = draws_;
    std::vector<double> vals(static_cast<std::size_t>(draws_));
    Matrix q(m_, t_);
    double sum = 0.0;
    for (long s = 0; s < draws_; ++s) {
      load(s, q);
      vals[static_cast<std::size_t>(s)] = per_draw(q);
      sum += vals[static_cast<std::size_t>(s)];
    }
    est.mean = sum / static_cast<double>(draws_);
    if (!exhaustive_ && draws_ > 1) {
      double ss = 0.0;
      for (double v : vals) ss += (v - est.mean) * (v - est.mean);
      est.std_error = std::sqrt(ss / static_cast<double>(draws_ - 1) / static_cast<double>(draws_));
    }
    return est;
  }

 private:
  // Exhaustive mode stores per-task tables and walks the product in mixed
  // radix (task 0 fastest); sampled mode stores q directly.
  void load(long s, Matrix& q) const {
    if (exhaustive_) {
      long rest = s;
      for (Eigen::Index t = 0; t < t_; ++t) {
        const auto& table = task_tables_[static_cast<std::size_t>(t)];
        const long size = table.cols();
        q.col(t) = table.col(rest % size);
        rest /= size;
      }
    } else {
      q = sampled_[static_cast<std::size_t>(s)];
    }
  }

  void build_exhaustive(const std::vector<GramStack>& stacks) {
    exhaustive_ = true;
    draws_ = 1;
    for (const auto& st : stacks) {
      const Eigen::Index n = st.samples();
      const long patterns = 1L << n;
      Matrix table(m_, patterns);
      Vector sigma(n);
      for (long code = 0; code < patterns; ++code) {
        for (Eigen::Index i = 0; i < n; ++i) sigma[i] = (code >> i) & 1 ? 1.0 : -1.0;
        for (Eigen::Index m = 0; m < m_; ++m) table(m, code) = sigma.dot(st.gram(m) * sigma);
      }
      task_tables_.push_back(std::move(table));
      draws_ *= patterns;
    }
  }

  void build_sampled(const std::vector<GramStack>& stacks, long samples, std::uint64_t seed) {
    exhaustive_ = false;
    draws_ = samples;
    sampled_.reserve(static_cast<std::size_t>(samples));
    for (long s = 0; s < samples; ++s) {
      const std::uint64_t base = derive_seed(seed, static_cast<std::uint64_t>(s));
      Matrix q(m_, t_);
      std::uint64_t position = 0, word = 0;
      for (Eigen::Index t = 0; t < t_; ++t) {
        const auto& st = stacks[static_cast<std::size_t>(t)];
        Vector sigma(st.samples());
        for (Eigen::Index i = 0; i < sigma.size(); ++i, ++position) {
          if (position % 64 == 0) word = splitmix64(base + position / 64);
          sigma[i] = (word >> (position % 64)) & 1 ? 1.0 : -1.0;
        }
        for (Eigen::Index m = 0; m < m_; ++m) q(m, t) = sigma.dot(st.gram(m) * sigma);
      }
      sampled_.push_back(std::move(q));
    }
  }

  Eigen::Index m_ = 0, t_ = 0, total_samples_ = 0;
  bool exhaustive_ = false;
  long draws_ = 0;
  std::vector<Matrix> task_tables_;
  std::vector<Matrix> sampled_;
};

/// R(F_λ) (γ = 1) or R(F_λ, γ) from a sign table.
inline RademacherEstimate rademacher_mc(const SignTable& table, const Vector& lambda, double r, double p,
                                        const std::optional<Vector>& gamma = std::nullopt) {
  const Eigen::Index t = table.tasks();
  if (lambda.size() != t) throw std::invalid_argument("lambda length does not match task count");
  if (!(lambda.array() > 0.0).all()) throw std::invalid_argument("lambda must be positive");
  if (gamma && (gamma->size() != t || !(gamma->array() > 0.0).all()))
    throw std::invalid_argument("gamma must be positive with one entry per task");
  if (!(r > 0.0)) throw std::invalid_argument("R must be positive");
  const double q = dual_exponent(p);
  Vector w(t);
  for (Eigen::Index i = 0; i < t; ++i) w[i] = (gamma ? (*gamma)[i] * (*gamma)[i] : 1.0) / lambda[i];
  const double pref = 2.0 / static_cast<double>(table.total_samples());
  auto est = table.reduce([&](const Matrix& qm) {
    const Vector u = (qm * w).cwiseMax(0.0);
    return std::sqrt(r * lp_norm(u, q));
  });
  est.mean *= pref;
  est.std_error *= pref;
  return est;
}

inline RademacherEstimate rademacher_mc(const std::vector<GramStack>& stacks, const Vector& lambda, double r, double p,
                                        long samples, std::uint64_t seed,
                                        const std::optional<Vector>& gamma = std::nullopt) {
  return rademacher_mc(SignTable(stacks, samples, seed), lambda, r, p, gamma);
}

/// s = E[sqrt(R max_t ||q_t(σ)||_{p*})], the expectation in the λ-free upper bound.
inline RademacherEstimate estimate_s(const SignTable& table, double r, double p) {
  if (!(r > 0.0)) throw std::invalid_argument("R must be positive");
  const double q = dual_exponent(p);
  return table.reduce([&](const Matrix& qm) {
    double best = 0.0;
    for (Eigen::Index t = 0; t < qm.cols(); ++t) best = std::max(best, lp_norm(qm.col(t).cwiseMax(0.0), q));
    return std::sqrt(r * best);
  });
}

inline RademacherEstimate estimate_s(const std::vector<GramStack>& stacks, double r, double p, long samples,
                                     std::uint64_t seed) {
  return estimate_s(SignTable(stacks, samples, seed), r, p);
}

/// Inputs shared by the bound formulas. total_samples is TN (Σ_t N_t).
struct BoundInputs {
  Eigen::Index tasks = 1;
  Eigen::Index total_samples = 1;
  Vector lambda;
  double r_lambda = 8.0;
  double rho = 1.0;
  double delta = 0.05;
  double R = 1.0;
  double p = 2.0;
  std::vector<Vector> traces;

  void validate() const {
    if (tasks < 1 || total_samples < 1) throw std::invalid_argument("T and TN must be positive");
    if (lambda.size() != tasks) throw std::invalid_argument("lambda length must equal T");
    if (!(lambda.array() > 0.0).all()) throw std::invalid_argument("lambda must be positive");
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
    if (!(R > 0.0)) throw std::invalid_argument("R must be positive");
    if (!(p >= 1.0)) throw std::invalid_argument("p must be >= 1");
  }
};

/// (2 sqrt(2 R p*) / TN) sqrt(Σ_t ||v_t||_{p*} / λ_t). Empty for p = 1 unless
/// `smoothed_p1` is set, in which case p* is replaced by max(1, 2 ln M).
inline std::optional<double> erc_upper_bound_lp(const BoundInputs& in, bool smoothed_p1 = false) {
  in.validate();
  if (static_cast<Eigen::Index>(in.traces.size()) != in.tasks) throw std::invalid_argument("one trace vector per task");
  double q = dual_exponent(in.p);
  if (std::isinf(q)) {
    if (!smoothed_p1) return std::nullopt;
    q = std::max(1.0, 2.0 * std::log(static_cast<double>(in.traces.front().size())));
  }
  double acc = 0.0;
  for (Eigen::Index t = 0; t < in.tasks; ++t) acc += lp_norm(in.traces[static_cast<std::size_t>(t)], q) / in.lambda[t];
  return 2.0 * std::sqrt(2.0 * in.R * q) / static_cast<double>(in.total_samples) * std::sqrt(acc);
}

struct BoundTerms {
  double empirical = 0.0;
  double complexity = 0.0;
  double confidence_lambda = 0.0;
  double confidence_delta = 0.0;
  double total = 0.0;
  double r_lambda_used = 0.0;
  std::vector<std::string> warnings;
};

/// Right-hand side of the bound valid for any λ in (1, r_λ), term by term.
/// r_λ is rounded up to an integer; the third term is clamped at 0.
inline BoundTerms bound_rhs_any_lambda(const BoundInputs& in, double emp_loss, double erc) {
  in.validate();
  BoundTerms b;
  const double r = std::ceil(in.r_lambda);
  b.r_lambda_used = r;
  if (r != in.r_lambda) b.warnings.push_back("r_lambda rounded up to " + std::to_string(static_cast<long>(r)));
  if ((in.lambda.array() <= 1.0).any() || (in.lambda.array() >= r).any())
    b.warnings.push_back("lambda on or outside the open interval (1, r_lambda)");
  const double tn = static_cast<double>(in.total_samples);
  b.empirical = emp_loss;
  b.complexity = std::sqrt(2.0) * r / in.rho * erc;
  const double arg = 2.0 * r / static_cast<double>(in.tasks) * in.lambda.cwiseInverse().sum();
  const double inner = 9.0 / tn * std::log(arg);
  if (inner < 0.0) {
    b.warnings.push_back("log argument below 1; third term clamped to 0");
    b.confidence_lambda = 0.0;
  } else {
    b.confidence_lambda = std::sqrt(inner);
  }
  b.confidence_delta = std::sqrt(9.0 * std::log(1.0 / in.delta) / (2.0 * tn));
  b.total = b.empirical + b.complexity + b.confidence_lambda + b.confidence_delta;
  return b;
}

/// Right-hand side of the bound for a λ fixed in advance, 1 <= λ_t <= r_λ.
inline BoundTerms bound_rhs_fixed_lambda(const BoundInputs& in, double emp_loss, double erc) {
  in.validate();
  BoundTerms b;
  b.r_lambda_used = in.r_lambda;
  const double tn = static_cast<double>(in.total_samples);
  b.empirical = emp_loss;
  b.complexity = in.r_lambda / in.rho * erc;
  b.confidence_delta = std::sqrt(9.0 * std::log(1.0 / in.delta) / (2.0 * tn));
  b.total = b.empirical + b.complexity + b.confidence_delta;
  return b;
}

struct BoundReport {
  Eigen::Index tasks = 0;
  Eigen::Index total_samples = 0;
  double rho = 1.0;
  double delta = 0.05;
  double p = 2.0;
  double R = 0.0;
  double r_lambda = 0.0;
  double r_lambda_int = 0.0;
  double empirical_loss = 0.0;
  RademacherEstimate erc;
  std::optional<double> erc_upper;
  BoundTerms any_lambda;
  BoundTerms fixed_lambda;
  std::optional<double> any_lambda_total_upper;
  std::optional<double> test_error;

  std::vector<std::pair<std::string, std::string>> fields() const {
    auto num = [](double v) {
      std::ostringstream os;
      os << std::setprecision(17) << v;
      return os.str();
    };
    auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string("NA"); };
    return {
        {"tasks", std::to_string(tasks)},
        {"total_samples", std::to_string(total_samples)},
        {"rho", num(rho)},
        {"delta", num(delta)},
        {"p", num(p)},
        {"R", num(R)},
        {"r_lambda", num(r_lambda)},
        {"r_lambda_int", num(r_lambda_int)},
        {"empirical_loss", num(empirical_loss)},
        {"erc_mc", num(erc.mean)},
        {"erc_mc_std_error", num(erc.std_error)},
        {"erc_mc_samples", std::to_string(erc.samples)},
        {"erc_mc_exhaustive", erc.exhaustive ? "1" : "0"},
        {"erc_upper_lp", opt(erc_upper)},
        {"any_lambda_empirical", num(any_lambda.empirical)},
        {"any_lambda_complexity", num(any_lambda.complexity)},
        {"any_lambda_confidence_lambda", num(any_lambda.confidence_lambda)},
        {"any_lambda_confidence_delta", num(any_lambda.confidence_delta)},
        {"any_lambda_total", num(any_lambda.total)},
        {"any_lambda_total_upper", opt(any_lambda_total_upper)},
        {"fixed_lambda_total", num(fixed_lambda.total)},
        {"test_error", opt(test_error)},
    };
  }

  /// One "name value" pair per line, then any warnings as "warning <text>".
  void write_text(std::ostream& os) const {
    for (const auto& [k, v] : fields()) os << k << ' ' << v << '\n';
    for (const auto& w : any_lambda.warnings) os << "warning " << w << '\n';
  }

  std::string csv_header() const {
    std::string h;
    for (const auto& [k, v] : fields()) h += (h.empty() ? "" : ",") + k;
    return h;
  }

  std::string csv_row() const {
    std::string r;
    bool first = true;
    for (const auto& [k, v] : fields()) {
      r += (first ? "" : ",") + (v == "NA" ? std::string() : v);
      first = false;
    }
    return r;
  }
};

struct BoundOptions {
  double rho = 1.0;
  double delta = 0.05;
  long mc_samples = 10000;
  std::uint64_t seed = 0;
  std::optional<double> R;  // defaults to Σ_t λ_t ||w_t||² of the model
};

/// Bound report for a trained model given the training Gram stacks, from a
/// prebuilt sign table (so that several models can share the same draws).
inline BoundReport bound_report(const MtlModel& model, const std::vector<GramStack>& stacks, const SignTable& table,
                                const BoundOptions& opt) {
  if (stacks.size() != model.tasks.size()) throw std::invalid_argument("one Gram stack per model task expected");
  BoundReport rep;
  rep.tasks = static_cast<Eigen::Index>(model.tasks.size());
  rep.total_samples = table.total_samples();
  rep.rho = opt.rho;
  rep.delta = opt.delta;
  rep.p = model.config.p;
  rep.R = opt.R ? *opt.R : model.weighted_sq_norm();
  if (!(rep.R > 0.0)) rep.R = std::numeric_limits<double>::min();
  rep.r_lambda = model.config.r_lambda;
  rep.r_lambda_int = std::ceil(model.config.r_lambda);
  rep.empirical_loss = weighted_empirical_loss(model, opt.rho);

  BoundInputs in;
  in.tasks = rep.tasks;
  in.total_samples = rep.total_samples;
  in.lambda = model.lambda.values;
  in.r_lambda = model.config.r_lambda;
  in.rho = opt.rho;
  in.delta = opt.delta;
  in.R = rep.R;
  in.p = model.config.p;
  for (const auto& s : stacks) in.traces.push_back(s.traces());

  rep.erc = rademacher_mc(table, in.lambda, rep.R, in.p);
  rep.erc_upper = erc_upper_bound_lp(in);
  rep.any_lambda = bound_rhs_any_lambda(in, rep.empirical_loss, rep.erc.mean);
  rep.fixed_lambda = bound_rhs_fixed_lambda(in, rep.empirical_loss, rep.erc.mean);
  if (rep.erc_upper) rep.any_lambda_total_upper = bound_rhs_any_lambda(in, rep.empirical_loss, *rep.erc_upper).total;
  return rep;
}

inline BoundReport bound_report(const MtlModel& model, const std::vector<GramStack>& stacks, const BoundOptions& opt) {
  return bound_report(model, stacks, SignTable(stacks, opt.mc_samples, opt.seed), opt);
}

/// Mean over tasks of the test misclassification rate.
inline double test_error(const MtlModel& model, const std::vector<TaskDataset>& test) {
  if (test.empty()) throw std::invalid_argument("empty test set");
  double acc = 0.0;
  for (const auto& t : test) acc += 1.0 - accuracy(predict(model, t.task_id, t.X).labels, t.y);
  return acc / static_cast<double>(test.size());
}

}  // namespace conicmtl
