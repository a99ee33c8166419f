#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace conicmtl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text; `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A task that cannot be trained (single class, empty class, zero sample).
class DegenerateTaskError : public Error {
 public:
  using Error::Error;
};

/// The λ budget cannot be met inside the box, i.e. Σ c_t / r_λ > a.
class InfeasibleBudgetError : public Error {
 public:
  using Error::Error;
};

/// A Gram matrix whose smallest eigenvalue is negative beyond tolerance.
class NotPsdError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Conjugate exponent p* = p / (p - 1); infinite for p = 1.
inline double dual_exponent(double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("norm exponent must be >= 1");
  if (p == 1.0) return kInf;
  if (std::isinf(p)) return 1.0;
  return p / (p - 1.0);
}

/// ℓ_q norm of a nonnegative-or-signed vector, q in [1, ∞].
///
/// The sum is formed on |x_i| / max|x| so that scaling the input by a power
/// of two scales the result by exactly the same power of two.
inline double lp_norm(const Vector& x, double q) {
  if (!(q >= 1.0)) throw std::invalid_argument("norm exponent must be >= 1");
  if (x.size() == 0) return 0.0;
  const double scale = x.cwiseAbs().maxCoeff();
  if (scale == 0.0 || std::isinf(q)) return scale;
  if (q == 1.0) return x.cwiseAbs().sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) acc += std::pow(std::abs(x[i]) / scale, q);
  return scale * std::pow(acc, 1.0 / q);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// 64-bit mixer used for counter-based random streams and content hashes.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed for stream `index` of `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ (index * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL));
}

}  // namespace conicmtl
