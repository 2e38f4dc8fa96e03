#pragma once

// Kinetic scaling, admissible initial data, marginal histograms and
// Monte Carlo evaluation of the BBGKY collision operators.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ternkin/collision.hpp"
#include "ternkin/dynamics.hpp"
#include "ternkin/geometry.hpp"
#include "ternkin/stats.hpp"

namespace tk {

struct ScalingParams {
  std::size_t N = 0, d = 2;
  double c2 = 1.0, c3 = 1.0;
  double eps2 = 0, eps3 = 0;
};

/// eps2 = (c2/N)^{1/(d-1)}, eps3 = (c3/N)^{2/(2d-1)}.
inline ScalingParams scaled_epsilons(std::size_t N, std::size_t d, double c2 = 1.0,
                                     double c3 = 1.0) {
  if (N < 3) throw std::invalid_argument("scaled_epsilons: need N >= 3");
  if (d < 2) throw std::invalid_argument("scaled_epsilons: need d >= 2");
  if (!(c2 > 0 && c3 > 0)) throw std::invalid_argument("scaled_epsilons: constants must be > 0");
  const double n = static_cast<double>(N), dd = static_cast<double>(d);
  ScalingParams s{N, d, c2, c3, 0, 0};
  s.eps2 = std::pow(c2 / n, 1.0 / (dd - 1.0));
  s.eps3 = std::pow(c3 / n, 2.0 / (2.0 * dd - 1.0));
  return s;
}

/// eps2 / eps3 for c2 = c3 = 1.
inline double epsilon_ratio_law(std::size_t N, std::size_t d) {
  const double dd = static_cast<double>(d);
  return std::pow(static_cast<double>(N), -1.0 / ((dd - 1.0) * (2.0 * dd - 1.0)));
}

using VelocityLaw = std::function<Vec(Rng&)>;

/// Gaussian velocities with variance 1/beta per component.
inline VelocityLaw maxwellian_law(std::size_t d, double beta) {
  if (!(beta > 0)) throw std::invalid_argument("maxwellian_law: beta must be > 0");
  const double sd = 1.0 / std::sqrt(beta);
  return [d, sd](Rng& rng) { return gaussian_vec(d, rng, sd); };
}

struct DensitySpec {
  double beta = 1.0;
  double mu = 0.0;
  double box = 1.0;        ///< side of the position cube [0, box)^d
  bool periodic = true;    ///< distances use the minimum image
  double theta = 0.0;      ///< pair separation for the well-separated set
  std::size_t max_attempts = 10'000'000;
  VelocityLaw velocity;    ///< empty means Maxwellian with beta

  void validate() const {
    if (!(beta > 0)) throw std::invalid_argument("DensitySpec: beta must be > 0");
    if (!(theta >= 0)) throw std::invalid_argument("DensitySpec: theta must be >= 0");
    if (!(box > 0)) throw std::invalid_argument("DensitySpec: box must be > 0");
  }
};

/// Places particles one at a time uniformly in the box, redrawing each one
/// until the configuration stays strictly inside the phase space (and
/// pairwise separated by theta).
inline Configuration sample_admissible_initial(std::size_t N, std::size_t d, double eps2,
                                               double eps3, const DensitySpec& spec, Rng& rng) {
  spec.validate();
  if (!(eps2 > 0 && eps2 < eps3)) throw std::invalid_argument("sample_admissible_initial: need 0 < eps2 < eps3");
  const double margin = 1e-9;
  const double t2 = std::max(eps2, spec.theta) * (1 + margin);
  const double t3sq = 2.0 * eps3 * eps3 * (1 + margin) * (1 + margin);
  const double box = spec.periodic ? spec.box : 0.0;
  const VelocityLaw vel = spec.velocity ? spec.velocity : maxwellian_law(d, spec.beta);
  Configuration z;
  z.x.reserve(N);
  z.v.reserve(N);
  std::vector<double> r2(N);
  std::size_t attempts = 0;
  while (z.m() < N) {
    if (++attempts > spec.max_attempts)
      throw std::runtime_error("sample_admissible_initial: rejection budget exhausted");
    Vec x(d);
    for (auto& c : x) c = spec.box * uniform01(rng);
    const std::size_t n = z.m();
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      r2[i] = norm2(min_image(x - z.x[i], box));
      if (r2[i] < t2 * t2) ok = false;
    }
    // the new particle has the largest index, so it is never a centre
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (r2[i] >= t3sq) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double a = norm2(min_image(z.x[j] - z.x[i], box));
        if (a + r2[i] < t3sq) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) continue;
    z.x.push_back(std::move(x));
    z.v.push_back(vel(rng));
  }
  return z;
}

// ---------------------------------------------------------------------------
// Marginal histograms

enum class MarginalMode { Velocity, PositionVelocity };

/// Axis-aligned regular grid over the features of one particle
/// (v, or (x, v)); an s-marginal uses the same grid for each of s particles.
struct ParticleGrid {
  std::vector<double> lo, hi;
  std::vector<std::size_t> bins;

  std::size_t dims() const { return lo.size(); }
  double cell_volume() const {
    double v = 1;
    for (std::size_t a = 0; a < dims(); ++a) v *= (hi[a] - lo[a]) / static_cast<double>(bins[a]);
    return v;
  }
  std::size_t cells() const {
    std::size_t c = 1;
    for (auto b : bins) c *= b;
    return c;
  }
  static ParticleGrid uniform(std::size_t dims, double lo, double hi, std::size_t bins) {
    return {std::vector<double>(dims, lo), std::vector<double>(dims, hi),
            std::vector<std::size_t>(dims, bins)};
  }
  void validate() const {
    if (lo.empty() || hi.size() != lo.size() || bins.size() != lo.size())
      throw std::invalid_argument("ParticleGrid: inconsistent axes");
    for (std::size_t a = 0; a < dims(); ++a)
      if (!(hi[a] > lo[a]) || bins[a] == 0) throw std::invalid_argument("ParticleGrid: empty axis");
  }
  /// Flat bin index, or nullopt when outside.
  std::optional<std::size_t> locate(const std::vector<double>& f) const {
    std::size_t id = 0;
    for (std::size_t a = 0; a < dims(); ++a) {
      const double u = (f[a] - lo[a]) / (hi[a] - lo[a]);
      if (!(u >= 0 && u < 1)) return std::nullopt;
      const auto b = std::min(bins[a] - 1, static_cast<std::size_t>(u * static_cast<double>(bins[a])));
      id = id * bins[a] + b;
    }
    return id;
  }
  std::vector<double> center(std::size_t id) const {
    std::vector<double> c(dims());
    for (std::size_t a = dims(); a-- > 0;) {
      const std::size_t b = id % bins[a];
      id /= bins[a];
      c[a] = lo[a] + (static_cast<double>(b) + 0.5) * (hi[a] - lo[a]) / static_cast<double>(bins[a]);
    }
    return c;
  }
};

struct MarginalHistogram {
  std::size_t s = 1;
  MarginalMode mode = MarginalMode::Velocity;
  ParticleGrid grid;            ///< per-particle grid
  std::vector<double> counts;   ///< over grid.cells()^s
  double total = 0;             ///< all tuples seen, inside or not
  double inside = 0;

  std::size_t cells() const { return counts.size(); }
  /// Mass per bin, normalized over the tuples that fell inside the grid.
  std::vector<double> mass() const {
    std::vector<double> m(counts.size(), 0.0);
    if (inside <= 0) return m;
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = counts[i] / inside;
    return m;
  }
  /// Density estimates (mass over cell volume).
  std::vector<double> density() const {
    auto m = mass();
    const double vol = std::pow(grid.cell_volume(), static_cast<double>(s));
    for (auto& x : m) x /= vol;
    return m;
  }
  double outside_fraction() const { return total > 0 ? 1.0 - inside / total : 0.0; }

  void merge(const MarginalHistogram& o) {
    if (o.counts.size() != counts.size() || o.s != s)
      throw std::invalid_argument("MarginalHistogram::merge: incompatible");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    total += o.total;
    inside += o.inside;
  }

  /// Sum out the last particle of an s-marginal.
  MarginalHistogram reduce() const {
    if (s < 2) throw std::invalid_argument("MarginalHistogram::reduce: need s >= 2");
    MarginalHistogram r{s - 1, mode, grid, {}, total, inside};
    const std::size_t g = grid.cells();
    r.counts.assign(counts.size() / g, 0.0);
    for (std::size_t i = 0; i < counts.size(); ++i) r.counts[i / g] += counts[i];
    return r;
  }
};

inline std::vector<double> particle_features(const Configuration& z, std::size_t i,
                                             MarginalMode mode) {
  std::vector<double> f;
  if (mode == MarginalMode::PositionVelocity) f.insert(f.end(), z.x[i].begin(), z.x[i].end());
  f.insert(f.end(), z.v[i].begin(), z.v[i].end());
  return f;
}

inline MarginalHistogram empty_marginal(std::size_t s, const ParticleGrid& grid,
                                        MarginalMode mode = MarginalMode::Velocity) {
  grid.validate();
  if (s < 1) throw std::invalid_argument("marginal: need s >= 1");
  MarginalHistogram h{s, mode, grid, {}, 0, 0};
  std::size_t n = 1;
  for (std::size_t k = 0; k < s; ++k) n *= grid.cells();
  h.counts.assign(n, 0.0);
  return h;
}

/// Adds one configuration: all ordered s-tuples of distinct particles, or
/// only (1, ..., s) when all_tuples is false.
inline void accumulate_marginal(MarginalHistogram& h, const Configuration& z,
                                bool all_tuples = true) {
  if (z.m() < h.s) throw std::invalid_argument("marginal: configuration smaller than s");
  const std::size_t g = h.grid.cells();
  std::vector<std::optional<std::size_t>> cell(z.m());
  for (std::size_t i = 0; i < z.m(); ++i) cell[i] = h.grid.locate(particle_features(z, i, h.mode));
  std::vector<std::size_t> idx(h.s);
  auto visit = [&](auto&& self, std::size_t depth, std::size_t id, bool in) -> void {
    if (depth == h.s) {
      h.total += 1;
      if (in) {
        h.counts[id] += 1;
        h.inside += 1;
      }
      return;
    }
    const std::size_t lim = all_tuples ? z.m() : depth + 1;
    for (std::size_t i = all_tuples ? 0 : depth; i < lim; ++i) {
      bool used = false;
      for (std::size_t k = 0; k < depth; ++k) used |= idx[k] == i;
      if (used) continue;
      idx[depth] = i;
      const bool ok = in && cell[i].has_value();
      self(self, depth + 1, ok ? id * g + *cell[i] : 0, ok);
    }
  };
  visit(visit, 0, 0, true);
}

inline MarginalHistogram marginal_estimate(const std::vector<Configuration>& ensemble,
                                           std::size_t s, const ParticleGrid& grid,
                                           MarginalMode mode = MarginalMode::Velocity,
                                           bool all_tuples = true) {
  if (ensemble.empty()) throw std::invalid_argument("marginal_estimate: empty ensemble");
  auto h = empty_marginal(s, grid, mode);
  for (const auto& z : ensemble) accumulate_marginal(h, z, all_tuples);
  return h;
}

/// L1 distance between two normalized histograms on the same grid.
inline double l1_distance(const MarginalHistogram& a, const MarginalHistogram& b) {
  if (a.cells() != b.cells()) throw std::invalid_argument("l1_distance: grid mismatch");
  const auto ma = a.mass(), mb = b.mass();
  double s = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) s += std::abs(ma[i] - mb[i]);
  return s;
}

struct Box {
  std::vector<double> lo, hi;
};

/// Quadrature of phi(V_s) f(X_s, V_s) over the velocity bins. For position
/// marginals X_s selects the position cell and the value is a density in X.
inline double observable(const MarginalHistogram& h,
                         const std::function<double(const std::vector<double>&)>& phi,
                         const std::optional<Box>& support = std::nullopt,
                         const std::vector<double>& xs = {}) {
  const std::size_t fd = h.grid.dims();
  const std::size_t xd = h.mode == MarginalMode::PositionVelocity ? fd / 2 : 0;
  if (support) {
    for (std::size_t k = 0; k < h.s; ++k)
      for (std::size_t a = xd; a < fd; ++a) {
        const std::size_t c = k * (fd - xd) + (a - xd);
        if (support->lo.size() <= c || support->lo[c] < h.grid.lo[a] || support->hi[c] > h.grid.hi[a])
          throw std::invalid_argument("observable: test-function support exceeds the grid");
      }
  }
  if (xd > 0 && xs.size() != h.s * xd)
    throw std::invalid_argument("observable: positions required for a position marginal");
  const auto m = h.mass();
  const std::size_t g = h.grid.cells();
  double xvol = 1;
  for (std::size_t a = 0; a < xd; ++a) xvol *= (h.grid.hi[a] - h.grid.lo[a]) / static_cast<double>(h.grid.bins[a]);
  double acc = 0;
  std::vector<double> vs(h.s * (fd - xd));
  for (std::size_t id = 0; id < m.size(); ++id) {
    if (m[id] == 0) continue;
    std::size_t rest = id;
    bool match = true;
    for (std::size_t k = h.s; k-- > 0;) {
      const auto c = h.grid.center(rest % g);
      rest /= g;
      for (std::size_t a = 0; a < xd; ++a) {
        const double w = (h.grid.hi[a] - h.grid.lo[a]) / static_cast<double>(h.grid.bins[a]);
        if (std::abs(c[a] - xs[k * xd + a]) > 0.5 * w) match = false;
      }
      for (std::size_t a = xd; a < fd; ++a) vs[k * (fd - xd) + (a - xd)] = c[a];
    }
    if (!match) continue;
    acc += phi(vs) * m[id];
  }
  return xd > 0 ? acc / std::pow(xvol, static_cast<double>(h.s)) : acc;
}

// ---------------------------------------------------------------------------
// BBGKY collision operators

enum class CollisionOrder { Binary, Ternary };

inline CollisionOrder parse_order(std::string_view s) {
  if (s == "binary") return CollisionOrder::Binary;
  if (s == "ternary") return CollisionOrder::Ternary;
  throw std::invalid_argument("unknown collision order: " + std::string(s));
}

/// (N-s) eps2^{d-1} for binary and 2^{d-2} (N-s)(N-s-1) eps3^{2d-1} for
/// ternary; zero beyond the last admissible s.
inline double bbgky_prefactor(CollisionOrder order, std::size_t N, std::size_t s, std::size_t d,
                              double eps2, double eps3) {
  const double n = static_cast<double>(N), ss = static_cast<double>(s),
               dd = static_cast<double>(d);
  if (order == CollisionOrder::Binary) {
    if (s >= N) return 0.0;
    return (n - ss) * std::pow(eps2, dd - 1.0);
  }
  if (s + 1 >= N) return 0.0;
  return std::pow(2.0, dd - 2.0) * (n - ss) * (n - ss - 1.0) * std::pow(eps3, 2.0 * dd - 1.0);
}

struct CollisionEstimate {
  double gain = 0, loss = 0, value = 0;
  double gain_se = 0, loss_se = 0, value_se = 0;
  double prefactor = 0;
  std::size_t samples = 0;
};

using DensityFn = std::function<double(const Configuration&)>;

/// Monte Carlo value of C^{N,+} - C^{N,-} at Z_s. Impact directions are
/// uniform on the sphere and new velocities are drawn from N(0, sigma^2 I);
/// gain and loss share the same draws.
inline CollisionEstimate bbgky_collision_estimate(const DensityFn& f, const Configuration& zs,
                                                  CollisionOrder order, std::size_t N,
                                                  double eps2, double eps3,
                                                  std::size_t mc_samples, Rng& rng,
                                                  double sigma = 1.0) {
  if (zs.m() == 0) throw std::invalid_argument("bbgky_collision_estimate: empty Z_s");
  if (mc_samples == 0) throw std::invalid_argument("bbgky_collision_estimate: no samples");
  const std::size_t s = zs.m(), d = zs.dim();
  CollisionEstimate out;
  out.prefactor = bbgky_prefactor(order, N, s, d, eps2, eps3);
  out.samples = mc_samples;
  if (out.prefactor == 0.0) return out;
  const bool bin = order == CollisionOrder::Binary;
  const std::size_t new_dims = bin ? d : 2 * d;
  const double sphere = unit_sphere_area(new_dims);
  const double log_norm = 0.5 * static_cast<double>(new_dims) * std::log(2 * M_PI * sigma * sigma);
  RunningStat g, l, v;
  Configuration pre = zs, post = zs;
  const std::size_t extra = bin ? 1 : 2;
  for (std::size_t e = 0; e < extra; ++e) {
    pre.x.emplace_back(d);
    pre.v.emplace_back(d);
    post.x.emplace_back(d);
    post.v.emplace_back(d);
  }
  for (std::size_t n = 0; n < mc_samples; ++n) {
    const Vec w = sample_sphere(new_dims, 1.0, rng);
    const Vec u = gaussian_vec(new_dims, rng, sigma);
    const double inv_q = sphere * std::exp(log_norm + 0.5 * norm2(u) / (sigma * sigma));
    double gs = 0, ls = 0;
    for (std::size_t i = 0; i < s; ++i) {
      if (bin) {
        const Vec vn = u;
        const double b = b2(w, vn - zs.v[i]);
        if (b <= 0) continue;
        pre.x[s] = zs.x[i] - eps2 * w;
        pre.v[s] = vn;
        post.x[s] = zs.x[i] + eps2 * w;
        auto [a, c] = binary_transform(w, zs.v[i], vn);
        post.v = zs.v;
        post.v.push_back(c);
        post.v[i] = a;
        const double kg = b * f(post), kl = b * f(pre);
        gs += kg;
        ls += kl;
      } else {
        const Vec w1 = w.head(d), w2 = w.tail(d);
        const Vec v1 = u.head(d), v2 = u.tail(d);
        const double b = b3(w1, w2, v1 - zs.v[i], v2 - zs.v[i]);
        if (b <= 0) continue;
        const double k = b / std::sqrt(1.0 + dot(w1, w2));
        const double r = std::sqrt(2.0) * eps3;
        pre.x[s] = zs.x[i] - r * w1;
        pre.x[s + 1] = zs.x[i] - r * w2;
        pre.v[s] = v1;
        pre.v[s + 1] = v2;
        post.x[s] = zs.x[i] + r * w1;
        post.x[s + 1] = zs.x[i] + r * w2;
        const auto o = ternary_transform(w1, w2, zs.v[i], v1, v2);
        post.v = zs.v;
        post.v.push_back(o.v2);
        post.v.push_back(o.v3);
        post.v[i] = o.v1;
        gs += k * f(post);
        ls += k * f(pre);
      }
    }
    g.push(gs * inv_q);
    l.push(ls * inv_q);
    v.push((gs - ls) * inv_q);
  }
  out.gain = out.prefactor * g.mean;
  out.loss = out.prefactor * l.mean;
  out.value = out.prefactor * v.mean;
  out.gain_se = out.prefactor * g.se();
  out.loss_se = out.prefactor * l.se();
  out.value_se = out.prefactor * v.se();
  return out;
}

/// Local well-posedness time with implied constant 1.
inline double lwp_time(std::size_t d, double beta0, double mu0) {
  if (!(beta0 > 0)) throw std::invalid_argument("lwp_time: beta0 must be > 0");
  const double h = beta0 / 2.0, dd = static_cast<double>(d);
  const double a = std::exp(-mu0 - h) * std::pow(h, -dd / 2.0) +
                   std::exp(-2.0 * mu0 - beta0) * std::pow(h, -dd);
  return beta0 / (a * (1.0 + 1.0 / std::sqrt(h)));
}

}  // namespace tk
