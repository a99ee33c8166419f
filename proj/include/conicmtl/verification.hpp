#pragma once

// Numerical checks of the monotonicity, homogeneity and upper-bound
// properties of the Rademacher estimate, on random small instances with
// exhaustive sign enumeration.

#include "conicmtl/bounds.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace conicmtl {

struct CheckResult {
  std::string name;
  long instances = 0;
  long comparisons = 0;
  long violations = 0;
  double worst = 0.0;  // largest violation amount seen (0 when none)

  bool passed() const { return violations == 0; }
};

/// Random PSD Gram stacks: each K = B B' with B of random rank, or a
/// normalized Gaussian Gram on random points; scaled by a random factor.
inline std::vector<GramStack> random_stacks(std::mt19937_64& rng, int tasks, int n, int m) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  std::uniform_int_distribution<int> rank(1, std::max(1, n));
  std::vector<GramStack> out;
  for (int t = 0; t < tasks; ++t) {
    std::vector<Matrix> grams;
    for (int k = 0; k < m; ++k) {
      if (k % 2 == 0) {
        Matrix b(n, rank(rng));
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
        grams.push_back(u(rng) * b * b.transpose());
      } else {
        Matrix x(n, 2);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
        grams.push_back(compute_gram(KernelSpec::gaussian(u(rng)), x));
      }
    }
    out.emplace_back("t" + std::to_string(t), std::move(grams));
  }
  return out;
}

inline Vector random_positive(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (auto& e : v) e = u(rng);
  return v;
}

namespace detail {

struct SmallShape {
  int t, n, m;
};

// T, N, M with T*N <= max_signs.
inline SmallShape random_shape(std::mt19937_64& rng, int max_t, int max_n, int max_m, int max_signs) {
  std::uniform_int_distribution<int> dt(1, max_t), dn(1, max_n), dm(1, max_m);
  for (;;) {
    SmallShape s{dt(rng), dn(rng), dm(rng)};
    if (s.t * s.n <= max_signs) return s;
  }
}

inline double pick(std::mt19937_64& rng, const std::vector<double>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

}  // namespace detail

/// R(F_λ) non-increasing in each λ_t (strictly decreasing when K_t ≠ 0).
inline CheckResult check_monotone_in_lambda(int instances, std::uint64_t seed) {
  CheckResult r{"erc non-increasing in each lambda_t", instances};
  std::mt19937_64 rng(seed);
  for (int k = 0; k < instances; ++k) {
    const auto s = detail::random_shape(rng, 3, 4, 3, 12);
    const auto stacks = random_stacks(rng, s.t, s.n, s.m);
    const SignTable table(stacks, 1, 0);
    const double p = detail::pick(rng, {1.0, 4.0 / 3.0, 2.0, 4.0});
    const Vector lambda = random_positive(rng, s.t, 1.0, 8.0);
    const double base = rademacher_mc(table, lambda, 1.0, p).mean;
    for (int t = 0; t < s.t; ++t) {
      Vector up = lambda;
      up[t] *= 1.5;
      const double v = rademacher_mc(table, up, 1.0, p).mean;
      ++r.comparisons;
      if (v > base) {
        ++r.violations;
        r.worst = std::max(r.worst, v - base);
      }
    }
  }
  return r;
}

/// R(F_λ, γ) non-decreasing in each γ_t for fixed λ.
inline CheckResult check_monotone_in_gamma(int instances, std::uint64_t seed) {
  CheckResult r{"erc non-decreasing in each gamma_t", instances};
  std::mt19937_64 rng(seed);
  for (int k = 0; k < instances; ++k) {
    const auto s = detail::random_shape(rng, 3, 4, 3, 12);
    const auto stacks = random_stacks(rng, s.t, s.n, s.m);
    const SignTable table(stacks, 1, 0);
    const double p = detail::pick(rng, {1.0, 4.0 / 3.0, 2.0, 4.0});
    const Vector lambda = random_positive(rng, s.t, 1.0, 8.0);
    const Vector gamma = random_positive(rng, s.t, 0.2, 2.0);
    const double base = rademacher_mc(table, lambda, 1.0, p, gamma).mean;
    for (int t = 0; t < s.t; ++t) {
      Vector up = gamma;
      up[t] *= 1.5;
      const double v = rademacher_mc(table, lambda, 1.0, p, up).mean;
      ++r.comparisons;
      if (v < base) {
        ++r.violations;
        r.worst = std::max(r.worst, base - v);
      }
    }
  }
  return r;
}

/// Exhaustive R(F_λ) <= Lp trace bound + 1e-12.
inline CheckResult check_lp_upper_bound(int instances, std::uint64_t seed) {
  CheckResult r{"erc <= Lp trace upper bound", instances};
  std::mt19937_64 rng(seed);
  for (int k = 0; k < instances; ++k) {
    const auto s = detail::random_shape(rng, 3, 4, 3, 12);
    const auto stacks = random_stacks(rng, s.t, s.n, s.m);
    const double p = detail::pick(rng, {4.0 / 3.0, 2.0, 4.0});
    const double big_r = std::uniform_real_distribution<double>(0.5, 4.0)(rng);
    BoundInputs in;
    in.tasks = s.t;
    in.total_samples = static_cast<Eigen::Index>(s.t) * s.n;
    in.lambda = random_positive(rng, s.t, 1.0, 8.0);
    in.R = big_r;
    in.p = p;
    for (const auto& st : stacks) in.traces.push_back(st.traces());
    const double mc = rademacher_mc(SignTable(stacks, 1, 0), in.lambda, big_r, p).mean;
    const double ub = *erc_upper_bound_lp(in);
    ++r.comparisons;
    if (mc > ub + 1e-12) {
      ++r.violations;
      r.worst = std::max(r.worst, mc - ub);
    }
  }
  return r;
}

/// R(F_λ) <= (2/TN) sqrt(Σ 1/λ_t) s.
inline CheckResult check_s_upper_bound(int instances, std::uint64_t seed) {
  CheckResult r{"erc <= (2/TN) sqrt(sum 1/lambda) s", instances};
  std::mt19937_64 rng(seed);
  for (int k = 0; k < instances; ++k) {
    const auto s = detail::random_shape(rng, 3, 4, 3, 12);
    const auto stacks = random_stacks(rng, s.t, s.n, s.m);
    const SignTable table(stacks, 1, 0);
    const double p = detail::pick(rng, {1.0, 4.0 / 3.0, 2.0, 4.0});
    const Vector lambda = random_positive(rng, s.t, 1.0, 8.0);
    const double mc = rademacher_mc(table, lambda, 1.0, p).mean;
    const double sv = estimate_s(table, 1.0, p).mean;
    const double ub = 2.0 / static_cast<double>(table.total_samples()) * std::sqrt(lambda.cwiseInverse().sum()) * sv;
    ++r.comparisons;
    if (mc > ub * (1.0 + 1e-12)) {
      ++r.violations;
      r.worst = std::max(r.worst, mc - ub);
    }
  }
  return r;
}

/// R(F_{2λ}) = R(F_λ) / sqrt(2) within `rel_tol` relative.
inline CheckResult check_homogeneity(int instances, std::uint64_t seed, double rel_tol = 1e-12) {
  CheckResult r{"erc(2 lambda) = erc(lambda) / sqrt(2)", instances};
  std::mt19937_64 rng(seed);
  for (int k = 0; k < instances; ++k) {
    const auto s = detail::random_shape(rng, 3, 4, 3, 12);
    const auto stacks = random_stacks(rng, s.t, s.n, s.m);
    const SignTable table(stacks, 1, 0);
    const double p = detail::pick(rng, {1.0, 4.0 / 3.0, 2.0, 4.0});
    const Vector lambda = random_positive(rng, s.t, 1.0, 8.0);
    const double a = rademacher_mc(table, lambda, 1.0, p).mean;
    const double b = rademacher_mc(table, 2.0 * lambda, 1.0, p).mean;
    const double err = std::abs(b - a / std::sqrt(2.0));
    ++r.comparisons;
    if (err > rel_tol * std::abs(a)) {
      ++r.violations;
      r.worst = std::max(r.worst, err / std::abs(a));
    }
  }
  return r;
}

/// Pareto-path weights exceed 1 and strictly decrease in p on {0.1, ..., 0.9};
/// λ = 1 at p = 1.
inline CheckResult check_pareto_monotone(int instances, std::uint64_t seed,
                                         ParetoFormula formula = ParetoFormula::kDerived) {
  CheckResult r{"pareto lambda > 1 and decreasing in p", instances};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dt(2, 6);
  std::uniform_real_distribution<double> logf(-3.0, 3.0);
  for (int k = 0; k < instances; ++k) {
    Vector f(dt(rng));
    for (auto& e : f) e = std::pow(10.0, logf(rng));
    Vector prev;
    for (int step = 1; step <= 9; ++step) {
      const Vector lam = pareto_lambda(f, step / 10.0, formula);
      for (Eigen::Index t = 0; t < lam.size(); ++t) {
        ++r.comparisons;
        if (!(lam[t] > 1.0)) {
          ++r.violations;
          r.worst = std::max(r.worst, 1.0 - lam[t]);
        }
        if (prev.size() && !(lam[t] < prev[t])) {
          ++r.violations;
          r.worst = std::max(r.worst, lam[t] - prev[t]);
        }
      }
      prev = lam;
    }
    const Vector one = pareto_lambda(f, 1.0, formula);
    ++r.comparisons;
    if (!(one.array() == 1.0).all()) ++r.violations;
  }
  return r;
}

/// Every check with its default instance count.
inline std::vector<CheckResult> run_radcheck(std::uint64_t seed, int scale = 1) {
  return {check_monotone_in_lambda(50 * scale, derive_seed(seed, 1)),
          check_monotone_in_gamma(50 * scale, derive_seed(seed, 2)),
          check_lp_upper_bound(100 * scale, derive_seed(seed, 3)),
          check_s_upper_bound(100 * scale, derive_seed(seed, 4)),
          check_homogeneity(50 * scale, derive_seed(seed, 5)),
          check_pareto_monotone(100 * scale, derive_seed(seed, 6))};
}

}  // namespace conicmtl
