#pragma once

// Two-sided t-tests for comparing per-run accuracies.

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace conicmtl {

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

inline double sample_variance(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

inline double two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

// Variance floor used when both samples are constant but their means differ.
inline constexpr double kVarianceFloor = 1e-12;

}  // namespace detail

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of freedom.
inline TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_t_test needs at least 2 values per sample");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = detail::mean_of(a), mb = detail::mean_of(b);
  double va = detail::sample_variance(a, ma), vb = detail::sample_variance(b, mb);
  TTestResult r;
  if (va == 0.0 && vb == 0.0) {
    if (ma == mb) {
      r.df = na + nb - 2.0;
      return r;
    }
    va = vb = detail::kVarianceFloor;
  }
  const double sa = va / na, sb = vb / nb;
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  r.p_value = detail::two_sided_p(r.t, r.df);
  return r;
}

/// Paired t-test on a_i - b_i.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test needs equal-length samples");
  if (a.size() < 2) throw std::invalid_argument("paired_t_test needs at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  const double md = detail::mean_of(d);
  double vd = detail::sample_variance(d, md);
  TTestResult r;
  r.df = n - 1.0;
  if (vd == 0.0) {
    if (md == 0.0) return r;
    vd = detail::kVarianceFloor;
  }
  r.t = md / std::sqrt(vd / n);
  r.p_value = detail::two_sided_p(r.t, r.df);
  return r;
}

}  // namespace conicmtl
