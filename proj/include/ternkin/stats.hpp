#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace tk {

/// Welford accumulator; merge() is associative so shards can be combined.
struct RunningStat {
  std::size_t n = 0;
  double mean = 0, m2 = 0;

  void push(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  void merge(const RunningStat& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double tot = static_cast<double>(n + o.n);
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.n) / tot;
    m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / tot;
    n += o.n;
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }
  double se() const { return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

struct Estimate {
  double value = 0;
  double se = 0;
  std::size_t samples = 0;
};

/// Proportion estimate with its binomial standard error.
inline Estimate proportion(std::size_t hits, std::size_t n) {
  if (n == 0) return {};
  const double p = static_cast<double>(hits) / static_cast<double>(n);
  return {p, std::sqrt(p * (1 - p) / static_cast<double>(n)), n};
}

struct LinearFit {
  double slope = 0, intercept = 0;
  double slope_se = 0, intercept_se = 0;
  double slope_lo = 0, slope_hi = 0;  ///< 95% interval
  std::size_t n = 0;
};

/// Weighted least squares y = a + b x. Zero weights mean unweighted.
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y,
                            std::vector<double> w = {}) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("linear_fit: need >= 2 points");
  const bool weighted = !w.empty();
  if (!weighted) w.assign(n, 1.0);
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += w[i] * (x[i] - mx) * (x[i] - mx);
    sxy += w[i] * (x[i] - mx) * (y[i] - my);
  }
  LinearFit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    rss += w[i] * r * r;
  }
  double s2;
  if (weighted) {
    // weights are inverse variances: scale by reduced chi-square when > 1
    s2 = n > 2 ? std::max(1.0, rss / static_cast<double>(n - 2)) : 1.0;
  } else {
    s2 = n > 2 ? rss / static_cast<double>(n - 2) : 0.0;
  }
  f.slope_se = std::sqrt(s2 / sxx);
  f.intercept_se = std::sqrt(s2 * (1.0 / sw + mx * mx / sxx));
  double q = 1.96;
  if (n > 2) {
    boost::math::students_t st(static_cast<double>(n - 2));
    q = boost::math::quantile(boost::math::complement(st, 0.025));
  }
  f.slope_lo = f.slope - q * f.slope_se;
  f.slope_hi = f.slope + q * f.slope_se;
  return f;
}

struct PowerFit {
  double exponent = 0, constant = 0;
  double exponent_se = 0, lo = 0, hi = 0;
};

/// Fit y = C x^p in log-log space, weighting by the relative standard errors.
inline PowerFit power_fit(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& se = {}) {
  std::vector<double> lx, ly, w;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) continue;
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
    if (!se.empty()) {
      const double rel = se[i] / y[i];
      w.push_back(rel > 0 ? 1.0 / (rel * rel) : 1e12);
    }
  }
  if (lx.size() < 2) throw std::invalid_argument("power_fit: need >= 2 positive points");
  const auto lf = linear_fit(lx, ly, w);
  return {lf.slope, std::exp(lf.intercept), lf.slope_se, lf.slope_lo, lf.slope_hi};
}

struct TrendTest {
  double s = 0, z = 0, p_value = 1;  ///< two-sided p-value
};

/// Mann-Kendall trend test with the normal approximation and tie correction.
inline TrendTest mann_kendall(const std::vector<double>& x) {
  const std::size_t n = x.size();
  TrendTest t;
  if (n < 3) return t;
  double s = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s += (x[j] > x[i]) - (x[j] < x[i]);
  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  const double nn = static_cast<double>(n);
  double var = nn * (nn - 1) * (2 * nn + 5);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    const double g = static_cast<double>(j - i);
    if (g > 1) var -= g * (g - 1) * (2 * g + 5);
    i = j;
  }
  var /= 18.0;
  t.s = s;
  if (var <= 0) return t;
  t.z = s > 0 ? (s - 1) / std::sqrt(var) : s < 0 ? (s + 1) / std::sqrt(var) : 0.0;
  boost::math::normal nd;
  t.p_value = 2.0 * boost::math::cdf(boost::math::complement(nd, std::abs(t.z)));
  return t;
}

/// Upper-tail p-value of a chi-square statistic.
inline double chi_square_pvalue(double stat, double dof) {
  boost::math::chi_squared cs(dof);
  return boost::math::cdf(boost::math::complement(cs, stat));
}

}  // namespace tk
