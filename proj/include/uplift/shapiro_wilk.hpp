#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "uplift/error.hpp"

namespace uplift {

struct ShapiroWilk {
  double w = 1.0;
  double p_value = 1.0;
};

namespace detail {

// c[0] + c[1] x + ... + c[n-1] x^(n-1)
inline double sw_poly(std::span<const double> c, double x) {
  double r = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) r = r * x + c[i];
  return r;
}

}  // namespace detail

/// Shapiro-Wilk W with Royston's approximation for the coefficients and the
/// p-value (valid for 3 <= n <= 5000).
inline ShapiroWilk shapiro_wilk(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 3 || n > 5000) throw DomainError("Shapiro-Wilk needs 3 <= n <= 5000, got n=" + std::to_string(n));
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const double range = x.back() - x.front();
  if (!(range > 1e-19 * std::max(1.0, std::abs(x.back())))) throw DomainError("Shapiro-Wilk: sample has zero variance");

  static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
  static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
  static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
  static constexpr double g[] = {-2.273, 0.459};

  const auto an = static_cast<double>(n);
  const std::size_t half = n / 2;
  // a[i] for i < half is the weight of the (n-1-i)-th order statistic;
  // the i-th gets -a[i].
  std::vector<double> a(half);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
  } else {
    const boost::math::normal standard;
    std::vector<double> m(half);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
      m[i] = boost::math::quantile(standard, (static_cast<double>(i + 1) - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = detail::sw_poly(c1, rsn) - m[0] / ssumm2;
    std::size_t first = 1;
    double fac = 0.0;
    if (n > 5) {
      first = 2;
      const double a2 = -m[1] / ssumm2 + detail::sw_poly(c2, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[1] = a2;
    } else {
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
    }
    a[0] = a1;
    for (std::size_t i = first; i < half; ++i) a[i] = -m[i] / fac;
  }

  // W = corr(a, x)^2 with the antisymmetric coefficient vector, computed in
  // the 1 - (1 - W) form for accuracy when W is close to 1.
  std::vector<double> full(n, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    full[i] = -a[i];
    full[n - 1 - i] = a[i];
  }
  double sa = 0.0, sx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += full[i];
    sx += x[i] / range;
  }
  sa /= an;
  sx /= an;
  double ssa = 0.0, ssx = 0.0, sax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = full[i] - sa;
    const double dx = x[i] / range - sx;
    ssa += da * da;
    ssx += dx * dx;
    sax += da * dx;
  }
  const double ssassx = std::sqrt(ssa * ssx);
  const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
  ShapiroWilk out;
  out.w = 1.0 - w1;

  if (n == 3) {
    constexpr double pi6 = 1.90985931710274;   // 6 / pi
    constexpr double stqr = 1.04719755119660;  // asin(sqrt(3/4))
    out.w = std::max(out.w, 0.75);
    out.p_value = std::max(0.0, pi6 * (std::asin(std::sqrt(out.w)) - stqr));
    return out;
  }
  double y = std::log(w1);
  const double lxx = std::log(an);
  double mean = 0.0, sd = 1.0;
  if (n <= 11) {
    const double gamma = detail::sw_poly(g, an);
    if (y >= gamma) {
      out.p_value = 1e-99;
      return out;
    }
    y = -std::log(gamma - y);
    mean = detail::sw_poly(c3, an);
    sd = std::exp(detail::sw_poly(c4, an));
  } else {
    mean = detail::sw_poly(c5, lxx);
    sd = std::exp(detail::sw_poly(c6, lxx));
  }
  out.p_value = 0.5 * std::erfc((y - mean) / (sd * std::sqrt(2.0)));
  return out;
}

inline double shapiro_wilk_w(std::span<const double> sample) { return shapiro_wilk(sample).w; }

}  // namespace uplift
