#pragma once

// Kernel SVM dual solver used for the per-task w-step.
//
//   max_α  1'α - ½ α'Qα,   Q = (y y') ∘ K,   0 <= α <= C   (+ y'α = 0 with a bias)
//
// Each iteration picks the two coordinates with the largest KKT violation
// (lowest index wins ties) and solves the two-variable subproblem exactly.
// Iteration stops once the duality gap falls below gap_tol + rel_gap_tol * J,
// where J = ½||w||² + C Σ max(0, 1 - y_i f(x_i)) is the primal objective.

#include "conicmtl/common.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <vector>

namespace conicmtl {

struct SvmOptions {
  bool use_bias = false;
  double gap_tol = 1e-6;
  double rel_gap_tol = 0.0;
  long max_iterations = 100000;
  bool check_psd = true;
  double psd_tol = 1e-8;
};

struct DualSolution {
  Vector alpha;
  double bias = 0.0;
  double objective = 0.0;       // primal J = regularizer + C * hinge_sum
  double regularizer = 0.0;     // ½ α∘y' K α∘y
  double hinge_sum = 0.0;       // Σ_i max(0, 1 - y_i f(x_i))
  double dual_objective = 0.0;  // 1'α - ½ α'Qα
  double duality_gap = 0.0;
  Vector component_sq_norms;    // filled by the trainer, see component_sq_norms()
  long iterations = 0;
  bool converged = false;
};

inline double hinge(double margin) { return std::max(0.0, 1.0 - margin); }

/// f = K (α∘y) + b.
inline Vector decision_values(const Matrix& k, const Vector& y, const Vector& alpha, double bias = 0.0) {
  return (k * alpha.cwiseProduct(y)).array() + bias;
}

namespace detail {

struct HingeMin {
  double value;
  double bias;
};

// Minimizes Σ_i max(0, -g_i - y_i b) over b. The term is max(0, p_i - b) for
// y_i = +1 with p_i = -g_i and max(0, b - q_i) for y_i = -1 with q_i = g_i.
inline HingeMin minimize_hinge_over_bias(const Vector& grad, const Vector& y) {
  std::vector<double> pos, neg;
  for (Eigen::Index i = 0; i < y.size(); ++i) (y[i] > 0 ? pos : neg).push_back(y[i] > 0 ? -grad[i] : grad[i]);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> pos_suffix(pos.size() + 1, 0.0), neg_prefix(neg.size() + 1, 0.0);
  for (std::size_t i = pos.size(); i-- > 0;) pos_suffix[i] = pos_suffix[i + 1] + pos[i];
  for (std::size_t i = 0; i < neg.size(); ++i) neg_prefix[i + 1] = neg_prefix[i] + neg[i];

  auto eval = [&](double b) {
    const auto pi = static_cast<std::size_t>(std::upper_bound(pos.begin(), pos.end(), b) - pos.begin());
    const auto ni = static_cast<std::size_t>(std::lower_bound(neg.begin(), neg.end(), b) - neg.begin());
    const double above = pos_suffix[pi] - static_cast<double>(pos.size() - pi) * b;
    const double below = static_cast<double>(ni) * b - neg_prefix[ni];
    return above + below;
  };

  std::vector<double> cand(pos);
  cand.insert(cand.end(), neg.begin(), neg.end());
  std::sort(cand.begin(), cand.end());
  double best = kInf;
  for (double b : cand) best = std::min(best, eval(b));
  // Flat bottoms are resolved to their midpoint.
  const double slack = 1e-12 * (1.0 + std::abs(best));
  double lo = kInf, hi = -kInf;
  for (double b : cand) {
    if (eval(b) <= best + slack) {
      lo = std::min(lo, b);
      hi = std::max(hi, b);
    }
  }
  const double b = 0.5 * (lo + hi);
  return {eval(b), b};
}

// Exact minimizer of ½ d'Hd + g'd over the box lo <= d <= hi in two variables.
inline std::array<double, 2> solve_box_qp_2d(double h00, double h01, double h11, double g0, double g1,
                                             std::array<double, 2> lo, std::array<double, 2> hi) {
  auto phi = [&](double a, double b) { return 0.5 * (h00 * a * a + 2.0 * h01 * a * b + h11 * b * b) + g0 * a + g1 * b; };
  auto line_min = [](double curv, double slope, double l, double h) {
    if (curv > 0.0) return std::clamp(-slope / curv, l, h);
    return slope < 0.0 ? h : (slope > 0.0 ? l : std::clamp(0.0, l, h));
  };

  std::array<double, 2> best{0.0, 0.0};
  double best_val = phi(0.0, 0.0);
  auto consider = [&](double a, double b) {
    const double v = phi(a, b);
    if (v < best_val) {
      best_val = v;
      best = {a, b};
    }
  };

  const double det = h00 * h11 - h01 * h01;
  if (det > 1e-14 * std::max(1.0, h00 * h11)) {
    const double a = (-g0 * h11 + g1 * h01) / det;
    const double b = (-g1 * h00 + g0 * h01) / det;
    if (a >= lo[0] && a <= hi[0] && b >= lo[1] && b <= hi[1]) consider(a, b);
  }
  for (double a : {lo[0], hi[0]}) consider(a, line_min(h11, g1 + h01 * a, lo[1], hi[1]));
  for (double b : {lo[1], hi[1]}) consider(line_min(h00, g0 + h01 * b, lo[0], hi[0]), b);
  return best;
}

inline void validate_svm_inputs(const Matrix& k, const Vector& y, double c, const SvmOptions& opt) {
  if (k.rows() != k.cols() || k.rows() != y.size()) throw std::invalid_argument("kernel and label sizes disagree");
  if (y.size() == 0) throw DegenerateTaskError("empty task");
  if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("C must be positive and finite");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 1.0 && y[i] != -1.0) throw std::invalid_argument("labels must be +1 or -1");
  if (!k.allFinite()) throw std::invalid_argument("non-finite kernel entry");
  if (opt.use_bias) {
    const bool has_pos = (y.array() > 0).any();
    const bool has_neg = (y.array() < 0).any();
    if (!(has_pos && has_neg)) throw DegenerateTaskError("a bias term needs both classes present");
  }
  if (opt.check_psd) {
    const double scale = std::max(1.0, k.diagonal().cwiseAbs().maxCoeff());
    if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw NotPsdError("kernel matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(k, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -opt.psd_tol * scale)
      throw NotPsdError("kernel matrix has eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
  }
}

}  // namespace detail

inline DualSolution solve_svm_dual(const Matrix& k, const Vector& y, double c, const SvmOptions& opt = {}) {
  detail::validate_svm_inputs(k, y, c, opt);
  const Eigen::Index n = y.size();
  const Matrix q = (y * y.transpose()).cwiseProduct(k);

  DualSolution sol;
  Vector& alpha = sol.alpha;
  alpha = Vector::Zero(n);
  Vector grad = Vector::Constant(n, -1.0);  // Qα - 1

  // Fills objective fields from (α, grad); returns whether the stop rule holds.
  auto evaluate = [&]() {
    const double quad = alpha.dot(grad + Vector::Ones(n));
    sol.regularizer = 0.5 * quad;
    sol.dual_objective = alpha.sum() - 0.5 * quad;
    if (opt.use_bias) {
      const auto hm = detail::minimize_hinge_over_bias(grad, y);
      sol.hinge_sum = hm.value;
      sol.bias = hm.bias;
    } else {
      sol.hinge_sum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) sol.hinge_sum += std::max(0.0, -grad[i]);
    }
    sol.objective = sol.regularizer + c * sol.hinge_sum;
    sol.duality_gap = std::max(0.0, sol.objective - sol.dual_objective);
    return sol.duality_gap <= opt.gap_tol + opt.rel_gap_tol * std::abs(sol.objective);
  };
  auto refresh_and_check = [&]() {
    grad.noalias() = q * alpha;
    grad.array() -= 1.0;
    return evaluate();
  };
  auto pin = [&](Eigen::Index i) {
    if (alpha[i] < 0.0) alpha[i] = 0.0;
    if (alpha[i] > c) alpha[i] = c;
  };

  long it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (evaluate() && refresh_and_check()) {
      sol.converged = true;
      break;
    }
    if (!opt.use_bias) {
      Eigen::Index first = -1, second = -1;
      double v1 = 0.0, v2 = 0.0;
      for (Eigen::Index t = 0; t < n; ++t) {
        double v = 0.0;
        if (alpha[t] < c && grad[t] < 0.0) v = -grad[t];
        else if (alpha[t] > 0.0 && grad[t] > 0.0) v = grad[t];
        if (v > v1) {
          second = first, v2 = v1;
          first = t, v1 = v;
        } else if (v > v2) {
          second = t, v2 = v;
        }
      }
      if (first < 0) {
        sol.converged = refresh_and_check();
        break;
      }
      if (second < 0) {
        const double lo = -alpha[first], hi = c - alpha[first];
        const double qii = q(first, first);
        double d = qii > 0.0 ? std::clamp(-grad[first] / qii, lo, hi) : (grad[first] < 0.0 ? hi : lo);
        alpha[first] = d == hi ? c : (d == lo ? 0.0 : alpha[first] + d);
        pin(first);
        grad.noalias() += d * q.col(first);
        continue;
      }
      const Eigen::Index i = first, j = second;
      const std::array<double, 2> lo{-alpha[i], -alpha[j]};
      const std::array<double, 2> hi{c - alpha[i], c - alpha[j]};
      const auto d = detail::solve_box_qp_2d(q(i, i), q(i, j), q(j, j), grad[i], grad[j], lo, hi);
      if (d[0] == 0.0 && d[1] == 0.0) break;  // stalled at working precision
      alpha[i] = d[0] == hi[0] ? c : (d[0] == lo[0] ? 0.0 : alpha[i] + d[0]);
      alpha[j] = d[1] == hi[1] ? c : (d[1] == lo[1] ? 0.0 : alpha[j] + d[1]);
      pin(i);
      pin(j);
      grad.noalias() += d[0] * q.col(i) + d[1] * q.col(j);
    } else {
      Eigen::Index i = -1, j = -1;
      double up = -kInf, low = kInf;
      for (Eigen::Index t = 0; t < n; ++t) {
        const double score = -y[t] * grad[t];
        const bool in_up = (y[t] > 0 && alpha[t] < c) || (y[t] < 0 && alpha[t] > 0.0);
        const bool in_low = (y[t] > 0 && alpha[t] > 0.0) || (y[t] < 0 && alpha[t] < c);
        if (in_up && score > up) up = score, i = t;
        if (in_low && score < low) low = score, j = t;
      }
      if (i < 0 || j < 0 || up - low <= 0.0) {
        sol.converged = refresh_and_check();
        break;
      }
      const double curv = k(i, i) + k(j, j) - 2.0 * k(i, j);
      const double slope = y[i] * grad[i] - y[j] * grad[j];
      const double room_i = y[i] > 0 ? c - alpha[i] : alpha[i];
      const double room_j = y[j] > 0 ? alpha[j] : c - alpha[j];
      const double s_max = std::min(room_i, room_j);
      double s = curv > 1e-12 ? std::min(-slope / curv, s_max) : s_max;
      if (!(s > 0.0)) s = s_max;
      if (!(s > 0.0)) break;
      const double di = y[i] * s, dj = -y[j] * s;
      if (s == room_i) alpha[i] = y[i] > 0 ? c : 0.0;
      else alpha[i] += di;
      if (s == room_j) alpha[j] = y[j] > 0 ? 0.0 : c;
      else alpha[j] += dj;
      pin(i);
      pin(j);
      grad.noalias() += di * q.col(i) + dj * q.col(j);
    }
  }
  if (!sol.converged) sol.converged = refresh_and_check();
  sol.iterations = it;
  return sol;
}

/// J = ½ (α∘y)'K(α∘y) + C Σ max(0, 1 - y_i f_i), with f = K(α∘y) + b.
inline double svm_primal_objective(const Matrix& k, const Vector& y, double c, const Vector& alpha, double bias) {
  const Vector beta = alpha.cwiseProduct(y);
  const Vector f = (k * beta).array() + bias;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) loss += hinge(y[i] * f[i]);
  return 0.5 * beta.dot(k * beta) + c * loss;
}

}  // namespace conicmtl
