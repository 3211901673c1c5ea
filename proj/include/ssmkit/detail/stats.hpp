#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ssmkit/common.hpp"

namespace ssmkit::detail {

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

/// Continued fraction for the incomplete beta (modified Lentz).
inline double betacf(double a, double b, double x) {
  constexpr int max_iter = 300;
  constexpr double eps = 3e-14, fpmin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

/// Regularized incomplete beta I_x(a, b).
inline double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double bt = std::exp(a * std::log(x) + b * std::log(1.0 - x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

/// Two-sided p-value of a Student-t statistic with nu degrees of freedom.
inline double t_test_two_sided(double t, double nu) {
  if (!std::isfinite(t)) return 0.0;
  return ibeta(nu / 2.0, 0.5, nu / (nu + t * t));
}

/// 1-based ranks with average assignment for ties.
inline Vec average_ranks(const Vec& x) {
  long n = x.size();
  std::vector<long> order(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](long a, long b) {
    if (x(a) != x(b)) return x(a) < x(b);
    return a < b;
  });
  Vec ranks(n);
  long i = 0;
  while (i < n) {
    long j = i;
    while (j + 1 < n && x(order[static_cast<std::size_t>(j + 1)]) == x(order[static_cast<std::size_t>(i)])) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (long k = i; k <= j; ++k) ranks(order[static_cast<std::size_t>(k)]) = avg;
    i = j + 1;
  }
  return ranks;
}

struct CorrStat {
  double r = 0.0;
  double p = 1.0;
};

inline CorrStat pearson_with_p(const Vec& x, const Vec& y) {
  long n = x.size();
  double mx = x.mean(), my = y.mean();
  Vec cx = x.array() - mx, cy = y.array() - my;
  double sx = cx.norm(), sy = cy.norm();
  if (sx == 0.0 || sy == 0.0) throw ValidationError("correlate: zero variance input");
  CorrStat out;
  out.r = cx.dot(cy) / (sx * sy);
  out.r = std::clamp(out.r, -1.0, 1.0);
  double nu = static_cast<double>(n - 2);
  if (std::abs(out.r) >= 1.0) {
    out.p = 0.0;
  } else {
    double t = out.r * std::sqrt(nu / (1.0 - out.r * out.r));
    out.p = t_test_two_sided(t, nu);
  }
  return out;
}

}  // namespace ssmkit::detail
