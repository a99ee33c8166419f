#pragma once

// The θ- and λ-blocks of the block-coordinate descent, and the per-kernel
// component norms that link them to the SVM solutions.

#include "conicmtl/kernel_engine.hpp"

#include <vector>

namespace conicmtl {

/// ||w_t^m||² for every base kernel m, in the coordinates where the task
/// regularizer reads Σ_m ||w_t^m||² / (2 θ_m):  θ_m² (α∘y)' K_t^m (α∘y).
inline Vector component_sq_norms(const Vector& alpha, const Vector& y, const GramStack& stack,
                                 const ThetaWeights& theta) {
  if (theta.values.size() != stack.size()) throw std::invalid_argument("theta length does not match kernel count");
  if (alpha.size() != stack.samples() || y.size() != stack.samples())
    throw std::invalid_argument("alpha/labels do not match the Gram size");
  const Vector beta = alpha.cwiseProduct(y);
  Vector out = Vector::Zero(stack.size());
  for (Eigen::Index m = 0; m < stack.size(); ++m) {
    const double th = theta.values[m];
    if (th == 0.0) continue;
    out[m] = std::max(0.0, th * th * beta.dot(stack.gram(m) * beta));
  }
  return out;
}

/// Σ_m u_m / (2 θ_m) with 0/0 read as 0.
inline double theta_objective(const Vector& u, const Vector& theta) {
  double acc = 0.0;
  for (Eigen::Index m = 0; m < u.size(); ++m) {
    if (u[m] == 0.0) continue;
    if (theta[m] <= 0.0) return kInf;
    acc += u[m] / (2.0 * theta[m]);
  }
  return acc;
}

/// Exact minimizer of Σ_m u_m / (2 θ_m) over {θ >= 0, ||θ||_p <= 1}:
/// θ_m = u_m^{1/(p+1)} / ||u^{1/(p+1)}||_p.
inline ThetaWeights theta_step(const Vector& u, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("p must be >= 1");
  if (u.size() == 0 || (u.array() < 0.0).any() || !u.allFinite())
    throw std::invalid_argument("theta_step needs a finite nonnegative weight vector");
  if ((u.array() == 0.0).all()) throw std::invalid_argument("theta_step weight vector is zero");
  Vector root(u.size());
  const double scale = u.maxCoeff();
  for (Eigen::Index m = 0; m < u.size(); ++m) root[m] = std::pow(u[m] / scale, 1.0 / (p + 1.0));
  return {root / lp_norm(root, p), p};
}

/// λ with its box [1, r_λ] and budget Σ_t c_t / λ_t <= a.
struct LambdaWeights {
  Vector values;
  double r_lambda = 8.0;
  double a = 0.0;

  static LambdaWeights ones(Eigen::Index t, double r_lambda, double a) { return {Vector::Ones(t), r_lambda, a}; }
};

/// Σ_t c_t / λ_t.
inline double budget_usage(const Vector& lambda, const Vector& c) { return c.cwiseQuotient(lambda).sum(); }

/// Minimizes Σ_t λ_t J_t over 1 <= λ_t <= r_λ, Σ_t c_t / λ_t <= a.
///
/// Stationarity gives λ_t(ν) = clip(sqrt(ν c_t / J_t), 1, r_λ); the multiplier ν
/// is 0 when λ = 1 already meets the budget, otherwise it is bisected until the
/// budget is tight. Tasks with J_t = 0 sit at r_λ. The returned λ always meets
/// the budget (it is taken from the feasible end of the bracket).
inline LambdaWeights lambda_step(const Vector& j, const Vector& c, double a, double r_lambda) {
  const Eigen::Index t = j.size();
  if (t == 0 || c.size() != t) throw std::invalid_argument("lambda_step: J and c must have equal nonzero length");
  if (!(r_lambda > 1.0)) throw std::invalid_argument("r_lambda must exceed 1");
  if (!(a > 0.0)) throw std::invalid_argument("budget a must be positive");
  if ((j.array() < 0.0).any() || !j.allFinite()) throw std::invalid_argument("task objectives must be nonnegative");
  if ((c.array() <= 0.0).any()) throw std::invalid_argument("budget weights c must be positive");
  if (c.sum() / r_lambda > a * (1.0 + 1e-12))
    throw InfeasibleBudgetError("infeasible budget: sum(c)/r_lambda = " + std::to_string(c.sum() / r_lambda) +
                                " > a = " + std::to_string(a));

  auto lambda_at = [&](double nu) {
    Vector out(t);
    for (Eigen::Index i = 0; i < t; ++i)
      out[i] = j[i] == 0.0 ? r_lambda : std::clamp(std::sqrt(nu * c[i] / j[i]), 1.0, r_lambda);
    return out;
  };

  Vector lo_lambda = lambda_at(0.0);
  if (budget_usage(lo_lambda, c) <= a) return {lo_lambda, r_lambda, a};

  double nu_lo = 0.0, nu_hi = 1.0;
  Vector hi_lambda = lambda_at(nu_hi);
  for (int k = 0; budget_usage(hi_lambda, c) > a; ++k) {
    if (k > 2000) throw InfeasibleBudgetError("lambda_step: budget unreachable");
    nu_lo = nu_hi;
    nu_hi *= 2.0;
    hi_lambda = lambda_at(nu_hi);
  }
  for (int k = 0; k < 400; ++k) {
    if ((nu_hi - nu_lo) < 1e-12 * nu_hi) break;
    if (a - budget_usage(hi_lambda, c) < 1e-10) break;
    const double mid = 0.5 * (nu_lo + nu_hi);
    Vector mid_lambda = lambda_at(mid);
    if (budget_usage(mid_lambda, c) > a) {
      nu_lo = mid;
    } else {
      nu_hi = mid;
      hi_lambda = std::move(mid_lambda);
    }
  }
  return {hi_lambda, r_lambda, a};
}

}  // namespace conicmtl
