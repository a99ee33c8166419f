#pragma once

// Base kernels, Gram construction and the Lp-ball kernel weights θ.

#include "conicmtl/common.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace conicmtl {

enum class KernelKind { kLinear, kPolynomial, kGaussian };

/// One base kernel k_m.
///
///   Linear      k(x, y) = x'y
///   Polynomial  k(x, y) = (offset + x'y)^degree
///   Gaussian    k(x, y) = exp(-||x - y||^2 / (2 spread^2))
///
/// With `normalize` set the kernel is cosine-normalized,
/// k(x, y) / sqrt(k(x, x) k(y, y)), so that every sample has unit self-similarity.
struct KernelSpec {
  KernelKind kind = KernelKind::kLinear;
  int degree = 2;
  double offset = 1.0;
  double spread = 1.0;
  bool normalize = true;

  static KernelSpec linear(bool normalize = true) { return {KernelKind::kLinear, 1, 0.0, 1.0, normalize}; }
  static KernelSpec polynomial(int degree, double offset = 1.0, bool normalize = true) {
    return {KernelKind::kPolynomial, degree, offset, 1.0, normalize};
  }
  static KernelSpec gaussian(double spread, bool normalize = false) {
    return {KernelKind::kGaussian, 1, 0.0, spread, normalize};
  }

  void validate() const {
    if (kind == KernelKind::kGaussian && !(spread > 0.0 && std::isfinite(spread)))
      throw std::invalid_argument("gaussian spread must be positive");
    if (kind == KernelKind::kPolynomial && degree < 1)
      throw std::invalid_argument("polynomial degree must be >= 1");
  }

  /// Stable textual identity, e.g. "gaussian(spread=0.125)". Round-trips through parse().
  std::string name() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind) {
      case KernelKind::kLinear: os << "linear("; break;
      case KernelKind::kPolynomial: os << "polynomial(degree=" << degree << ",offset=" << offset << ","; break;
      case KernelKind::kGaussian: os << "gaussian(spread=" << spread << ","; break;
    }
    os << "normalize=" << (normalize ? 1 : 0) << ")";
    return os.str();
  }

  static KernelSpec parse(const std::string& text);

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline KernelSpec KernelSpec::parse(const std::string& text) {
  const auto open = text.find('(');
  const auto close = text.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw ParseError("bad kernel spec '" + text + "'", 0);
  const std::string head = text.substr(0, open);
  KernelSpec spec;
  if (head == "linear") spec = linear();
  else if (head == "polynomial") spec = polynomial(2);
  else if (head == "gaussian") spec = gaussian(1.0);
  else throw ParseError("unknown kernel kind '" + head + "'", 0);

  std::istringstream body(text.substr(open + 1, close - open - 1));
  std::string field;
  while (std::getline(body, field, ',')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw ParseError("bad kernel field '" + field + "'", 0);
    const std::string key = field.substr(0, eq);
    const double value = std::stod(field.substr(eq + 1));
    if (key == "degree") spec.degree = static_cast<int>(value);
    else if (key == "offset") spec.offset = value;
    else if (key == "spread") spec.spread = value;
    else if (key == "normalize") spec.normalize = value != 0.0;
    else throw ParseError("unknown kernel field '" + key + "'", 0);
  }
  spec.validate();
  return spec;
}

/// Linear, quadratic polynomial and nine Gaussians with spreads 2^-7 ... 2^7.
inline std::vector<KernelSpec> default_dictionary() {
  std::vector<KernelSpec> specs{KernelSpec::linear(), KernelSpec::polynomial(2)};
  for (int e : {-7, -5, -3, -1, 0, 1, 3, 5, 7}) specs.push_back(KernelSpec::gaussian(std::ldexp(1.0, e)));
  return specs;
}

namespace detail {

template <typename A, typename B>
double raw_kernel(const KernelSpec& spec, const A& x, const B& y) {
  switch (spec.kind) {
    case KernelKind::kLinear: return x.dot(y);
    case KernelKind::kPolynomial: return std::pow(spec.offset + x.dot(y), spec.degree);
    case KernelKind::kGaussian:
      return std::exp(-(x - y).squaredNorm() / (2.0 * spec.spread * spec.spread));
  }
  return 0.0;
}

inline void check_features(const Matrix& x) {
  if (!x.allFinite()) throw std::invalid_argument("non-finite feature value");
}

inline Vector self_similarity(const KernelSpec& spec, const Matrix& x) {
  Vector d(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) d[i] = raw_kernel(spec, x.row(i), x.row(i));
  return d;
}

}  // namespace detail

/// Scales a square Gram matrix to unit diagonal: G(i,j) / sqrt(G(i,i) G(j,j)).
inline Matrix cosine_normalize(const Matrix& gram) {
  if (gram.rows() != gram.cols()) throw std::invalid_argument("cosine_normalize needs a square matrix");
  const Eigen::Index n = gram.rows();
  Vector inv_root(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(gram(i, i) > 0.0))
      throw DegenerateTaskError("nonpositive self-similarity at sample " + std::to_string(i) +
                                " (zero vector under a linear kernel?)");
    inv_root[i] = 1.0 / std::sqrt(gram(i, i));
  }
  Matrix out(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) out(i, j) = gram(i, j) * inv_root[i] * inv_root[j];
    out(j, j) = 1.0;
  }
  return out;
}

/// Gram matrix between the sample rows of `rows` and `cols` (samples are rows).
inline Matrix compute_gram(const KernelSpec& spec, const Matrix& rows, const Matrix& cols) {
  spec.validate();
  if (rows.cols() != cols.cols()) throw std::invalid_argument("feature dimension mismatch in compute_gram");
  detail::check_features(rows);
  detail::check_features(cols);
  Matrix g(rows.rows(), cols.rows());
  for (Eigen::Index j = 0; j < cols.rows(); ++j)
    for (Eigen::Index i = 0; i < rows.rows(); ++i) g(i, j) = detail::raw_kernel(spec, rows.row(i), cols.row(j));
  if (!spec.normalize) return g;

  const Vector dr = detail::self_similarity(spec, rows);
  const Vector dc = detail::self_similarity(spec, cols);
  for (Eigen::Index i = 0; i < dr.size(); ++i)
    if (!(dr[i] > 0.0)) throw DegenerateTaskError("nonpositive self-similarity at row " + std::to_string(i));
  for (Eigen::Index j = 0; j < dc.size(); ++j)
    if (!(dc[j] > 0.0)) throw DegenerateTaskError("nonpositive self-similarity at column " + std::to_string(j));
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) /= std::sqrt(dr[i] * dc[j]);
  return g;
}

/// Symmetric Gram matrix of one sample set; the normalized diagonal is exactly 1.
inline Matrix compute_gram(const KernelSpec& spec, const Matrix& x) {
  spec.validate();
  detail::check_features(x);
  const Eigen::Index n = x.rows();
  Matrix g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) g(i, j) = g(j, i) = detail::raw_kernel(spec, x.row(i), x.row(j));
  return spec.normalize ? cosine_normalize(g) : g;
}

/// θ on the nonnegative part of the Lp unit ball.
struct ThetaWeights {
  Vector values;
  double p = 2.0;

  /// The feasible point with equal weights and ||θ||_p = 1.
  static ThetaWeights uniform(Eigen::Index m, double p) {
    return {Vector::Constant(m, std::pow(static_cast<double>(m), -1.0 / p)), p};
  }
  double dual_p() const { return dual_exponent(p); }
  bool feasible(double tol = 1e-9) const { return values.minCoeff() >= 0.0 && lp_norm(values, p) <= 1.0 + tol; }
};

/// The M base Gram matrices of one task, K_t^1 ... K_t^M, with their traces.
/// Immutable once built.
class GramStack {
 public:
  GramStack() = default;
  GramStack(std::string task_id, std::vector<Matrix> grams) : task_id_(std::move(task_id)), grams_(std::move(grams)) {
    if (grams_.empty()) throw std::invalid_argument("GramStack needs at least one kernel");
    const Eigen::Index n = grams_.front().rows();
    traces_.resize(static_cast<Eigen::Index>(grams_.size()));
    for (std::size_t m = 0; m < grams_.size(); ++m) {
      if (grams_[m].rows() != n || grams_[m].cols() != n)
        throw std::invalid_argument("GramStack matrices must all be N x N");
      traces_[static_cast<Eigen::Index>(m)] = grams_[m].trace();
    }
  }

  /// Evaluates every spec on the samples in `x` (rows).
  static GramStack build(std::string task_id, const std::vector<KernelSpec>& specs, const Matrix& x) {
    std::vector<Matrix> grams;
    grams.reserve(specs.size());
    for (const auto& s : specs) grams.push_back(compute_gram(s, x));
    return GramStack(std::move(task_id), std::move(grams));
  }

  const std::string& task_id() const { return task_id_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(grams_.size()); }
  Eigen::Index samples() const { return grams_.empty() ? 0 : grams_.front().rows(); }
  const Matrix& gram(Eigen::Index m) const { return grams_[static_cast<std::size_t>(m)]; }
  const std::vector<Matrix>& grams() const { return grams_; }
  const Vector& traces() const { return traces_; }

  /// Restriction to a subset of samples (rows and columns).
  GramStack subset(const std::vector<Eigen::Index>& idx) const {
    std::vector<Matrix> out;
    out.reserve(grams_.size());
    for (const auto& g : grams_) out.push_back(g(idx, idx));
    return GramStack(task_id_, std::move(out));
  }

 private:
  std::string task_id_;
  std::vector<Matrix> grams_;
  Vector traces_;
};

/// Σ_m θ_m K_t^m.
inline Matrix combine(const GramStack& stack, const ThetaWeights& theta) {
  if (theta.values.size() != stack.size()) throw std::invalid_argument("theta length does not match kernel count");
  Matrix k = Matrix::Zero(stack.samples(), stack.samples());
  for (Eigen::Index m = 0; m < stack.size(); ++m)
    if (theta.values[m] != 0.0) k.noalias() += theta.values[m] * stack.gram(m);
  return k;
}

/// v_t = [tr(K_t^1), ..., tr(K_t^M)].
inline Vector trace_vector(const GramStack& stack) { return stack.traces(); }

/// Spot check of positive semidefiniteness: σ'Kσ >= -tol ||σ||^2 for random sign vectors.
inline bool sampled_psd_check(const Matrix& k, std::uint64_t seed, int probes = 100, double tol = 1e-8) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  Vector s(k.rows());
  for (int r = 0; r < probes; ++r) {
    for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = coin(rng) ? 1.0 : -1.0;
    if (s.dot(k * s) < -tol * s.squaredNorm()) return false;
  }
  return true;
}

/// Per-dimension standardization fitted on a training split and reused later.
/// Dimensions with zero variance are centred but not scaled.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(Vector mean, Vector scale) : mean_(std::move(mean)), scale_(std::move(scale)) {}

  static Standardizer fit(const Matrix& x) {
    if (x.rows() == 0) throw std::invalid_argument("cannot standardize an empty sample");
    Vector mean = x.colwise().mean();
    Vector scale(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - mean[j]).square().sum() / static_cast<double>(x.rows());
      scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return {std::move(mean), std::move(scale)};
  }

  /// Identity transform for `d` dimensions.
  static Standardizer identity(Eigen::Index d) { return {Vector::Zero(d), Vector::Ones(d)}; }

  Matrix apply(const Matrix& x) const {
    if (x.cols() != mean_.size()) throw std::invalid_argument("feature dimension mismatch in Standardizer");
    Matrix out = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = (x.col(j).array() - mean_[j]) / scale_[j];
    return out;
  }

  const Vector& mean() const { return mean_; }
  const Vector& scale() const { return scale_; }

 private:
  Vector mean_;
  Vector scale_;
};

}  // namespace conicmtl
