#pragma once

// Dimension-generic small vectors, interaction distances, cross-sections,
// uniform sphere sampling and the rank-one determinant identity.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace tk {

/// Inline vector with runtime length and a fixed upper capacity.
/// Positions, velocities and impact directions all use this type.
class Vec {
 public:
  static constexpr std::size_t kCapacity = 16;

  Vec() = default;
  explicit Vec(std::size_t n, double fill = 0.0) : n_(check_size(n)) {
    for (std::size_t i = 0; i < n_; ++i) c_[i] = fill;
  }
  Vec(std::initializer_list<double> xs) : n_(check_size(xs.size())) {
    std::size_t i = 0;
    for (double x : xs) c_[i++] = x;
  }

  std::size_t size() const noexcept { return n_; }
  double& operator[](std::size_t i) noexcept { return c_[i]; }
  double operator[](std::size_t i) const noexcept { return c_[i]; }
  double* begin() noexcept { return c_.data(); }
  double* end() noexcept { return c_.data() + n_; }
  const double* begin() const noexcept { return c_.data(); }
  const double* end() const noexcept { return c_.data() + n_; }

  Vec& operator+=(const Vec& o) {
    same_dim(*this, o);
    for (std::size_t i = 0; i < n_; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) {
    same_dim(*this, o);
    for (std::size_t i = 0; i < n_; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Vec& operator*=(double s) noexcept {
    for (std::size_t i = 0; i < n_; ++i) c_[i] *= s;
    return *this;
  }
  Vec& operator/=(double s) noexcept {
    for (std::size_t i = 0; i < n_; ++i) c_[i] /= s;
    return *this;
  }

  bool all_finite() const noexcept {
    for (std::size_t i = 0; i < n_; ++i)
      if (!std::isfinite(c_[i])) return false;
    return true;
  }

  /// Split a 2n-vector into its two n-halves.
  Vec head(std::size_t k) const {
    if (k > n_) throw std::invalid_argument("Vec::head: length exceeds size");
    Vec r(k);
    for (std::size_t i = 0; i < k; ++i) r.c_[i] = c_[i];
    return r;
  }
  Vec tail(std::size_t k) const {
    if (k > n_) throw std::invalid_argument("Vec::tail: length exceeds size");
    Vec r(k);
    for (std::size_t i = 0; i < k; ++i) r.c_[i] = c_[n_ - k + i];
    return r;
  }

  static void same_dim(const Vec& a, const Vec& b) {
    if (a.n_ != b.n_) [[unlikely]]
      mismatch(a.n_, b.n_);
  }

 private:
  [[noreturn, gnu::cold, gnu::noinline]] static void mismatch(std::size_t a, std::size_t b) {
    throw std::invalid_argument("dimension mismatch: " + std::to_string(a) + " vs " +
                                std::to_string(b));
  }
  static std::size_t check_size(std::size_t n) {
    if (n > kCapacity) throw std::invalid_argument("Vec: length exceeds capacity");
    return n;
  }
  std::array<double, kCapacity> c_{};
  std::size_t n_ = 0;
};

inline Vec operator+(Vec a, const Vec& b) { return a += b; }
inline Vec operator-(Vec a, const Vec& b) { return a -= b; }
inline Vec operator-(Vec a) { return a *= -1.0; }
inline Vec operator*(Vec a, double s) { return a *= s; }
inline Vec operator*(double s, Vec a) { return a *= s; }
inline Vec operator/(Vec a, double s) { return a /= s; }

inline bool operator==(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

inline std::ostream& operator<<(std::ostream& os, const Vec& v) {
  os << '(';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os << ')';
}

inline double dot(const Vec& a, const Vec& b) {
  Vec::same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
inline double norm2(const Vec& a) noexcept {
  double s = 0.0;
  for (double x : a) s += x * x;
  return s;
}
inline double norm(const Vec& a) noexcept { return std::sqrt(norm2(a)); }

/// Concatenate two vectors (used for points of S^{2d-1} in R^{2d}).
inline Vec concat(const Vec& a, const Vec& b) {
  Vec r(a.size() + b.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[a.size() + i] = b[i];
  return r;
}

/// Binary distance |x - y|.
inline double d2(const Vec& x, const Vec& y) {
  Vec::same_dim(x, y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = x[i] - y[i];
    s += t * t;
  }
  return std::sqrt(s);
}

/// Ternary distance sqrt(|xi-xj|^2 + |xi-xk|^2). Particle i is the centre.
inline double d3(const Vec& xi, const Vec& xj, const Vec& xk) {
  Vec::same_dim(xi, xj);
  Vec::same_dim(xi, xk);
  double s = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double a = xi[i] - xj[i], b = xi[i] - xk[i];
    s += a * a + b * b;
  }
  return std::sqrt(s);
}

inline double b2(const Vec& w1, const Vec& nu1) { return dot(w1, nu1); }
inline double b3(const Vec& w1, const Vec& w2, const Vec& nu1, const Vec& nu2) {
  return dot(w1, nu1) + dot(w2, nu2);
}

using Rng = std::mt19937_64;

/// Independent stream derived from (seed, stream) through seed_seq mixing.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(stream),
                   static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
  return Rng(sq);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline Vec gaussian_vec(std::size_t n, Rng& rng, double sigma = 1.0) {
  std::normal_distribution<double> g(0.0, sigma);
  Vec v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

/// Uniform point on the sphere of radius r in R^n (normalised Gaussian).
inline Vec sample_sphere(std::size_t n, double r, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_sphere: n must be >= 1");
  if (!(r > 0)) throw std::invalid_argument("sample_sphere: r must be > 0");
  std::normal_distribution<double> g;
  Vec v(n);
  double s = 0.0;
  do {
    s = 0.0;
    for (auto& x : v) {
      x = g(rng);
      s += x * x;
    }
  } while (s < 1e-300);
  v *= r / std::sqrt(s);
  return v;
}

/// Uniform point in the closed ball of radius r in R^n.
inline Vec sample_ball(std::size_t n, double r, Rng& rng) {
  Vec v = sample_sphere(n, 1.0, rng);
  const double u = uniform01(rng);
  v *= r * std::pow(u, 1.0 / static_cast<double>(n));
  return v;
}

/// det(lambda I + w u^T) = lambda^n (1 + <w,u>/lambda).
inline double rank1_det(double lambda, const Vec& w, const Vec& u) {
  if (lambda == 0.0) throw std::invalid_argument("rank1_det: lambda must be non-zero");
  const double n = static_cast<double>(w.size());
  return std::pow(lambda, n) * (1.0 + dot(w, u) / lambda);
}

/// Surface area of the unit sphere S^{n-1} in R^n.
inline double unit_sphere_area(int n) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}
/// Volume of the unit ball in R^n.
inline double unit_ball_volume(int n) {
  return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

}  // namespace tk
