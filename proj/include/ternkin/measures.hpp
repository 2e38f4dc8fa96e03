#pragma once

// Monte Carlo measures of the geometric sets behind the stability
// estimates, with closed forms where they exist and power-law fits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "ternkin/collision.hpp"
#include "ternkin/dynamics.hpp"
#include "ternkin/geometry.hpp"
#include "ternkin/parallel.hpp"
#include "ternkin/stats.hpp"

namespace tk {

// ---------------------------------------------------------------------------
// Closed forms

/// int_0^phi sin^n(theta) dtheta for 0 <= phi <= pi.
inline double sin_power_integral(int n, double phi) {
  if (phi < 0 || phi > std::numbers::pi + 1e-15)
    throw std::invalid_argument("sin_power_integral: phi outside [0, pi]");
  const double a = 0.5 * (n + 1);
  const auto half = [&](double p) {
    const double s = std::sin(p);
    return 0.5 * boost::math::beta(a, 0.5, std::min(1.0, s * s));
  };
  if (phi <= 0.5 * std::numbers::pi) return half(phi);
  return 2.0 * half(0.5 * std::numbers::pi) - half(std::numbers::pi - phi);
}

/// Surface measure of the two-sided cone {|<w, nu>| >= alpha |w||nu|} on
/// S_r^{d-1}: two caps of half-angle arccos(alpha).
inline double cap_measure(std::size_t d, double alpha, double r = 1.0) {
  if (d < 2 || alpha < 0 || alpha > 1) throw std::invalid_argument("cap_measure: bad arguments");
  const int n = static_cast<int>(d) - 2;
  return std::pow(r, static_cast<double>(d) - 1.0) * unit_sphere_area(static_cast<int>(d) - 1) *
         2.0 * sin_power_integral(n, std::acos(alpha));
}

/// The single-cap expression r^{d-1} |S^{d-2}| int_0^{2 arccos alpha} sin^{d-2}.
/// It agrees with cap_measure for d = 2 and at alpha in {0, 1}.
inline double cap_measure_single_angle(std::size_t d, double alpha, double r = 1.0) {
  if (d < 2 || alpha < 0 || alpha > 1) throw std::invalid_argument("cap_measure: bad arguments");
  return std::pow(r, static_cast<double>(d) - 1.0) * unit_sphere_area(static_cast<int>(d) - 1) *
         sin_power_integral(static_cast<int>(d) - 2, 2.0 * std::acos(alpha));
}

inline double cap_fraction(std::size_t d, double alpha) {
  return cap_measure(d, alpha) / unit_sphere_area(static_cast<int>(d));
}

/// For (w1, w2) uniform on S^{2d-1}, |w1|^2 ~ Beta(d/2, d/2).
inline double half_norm_cdf(std::size_t d, double x) {
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  const double a = 0.5 * static_cast<double>(d);
  return boost::math::ibeta(a, a, x);
}

/// Area of {v in B_R^2 : dist(v, line) <= rho} for a line at distance h from the centre.
inline double disk_strip_area(double R, double rho, double h) {
  const auto G = [R](double s) {
    s = std::clamp(s, -R, R);
    return R * R * (std::numbers::pi - std::acos(s / R)) + s * std::sqrt(R * R - s * s);
  };
  return G(h + rho) - G(h - rho);
}

// ---------------------------------------------------------------------------
// Set specifications

enum class SetKind { Cap, CylinderBall, Strip, TruncBall, ConeDiff, AnnulusI1, HemiAnnulus };
enum class Domain { Sphere, DoubleSphere, Hemisphere, Ball };

inline std::string_view to_string(SetKind k) {
  switch (k) {
    case SetKind::Cap: return "cap";
    case SetKind::CylinderBall: return "cylinder-ball";
    case SetKind::Strip: return "strip";
    case SetKind::TruncBall: return "trunc-ball";
    case SetKind::ConeDiff: return "cone-diff";
    case SetKind::AnnulusI1: return "annulus-i1";
    case SetKind::HemiAnnulus: return "hemi-annulus";
  }
  return "?";
}

inline SetKind parse_set_kind(std::string_view s) {
  for (auto k : {SetKind::Cap, SetKind::CylinderBall, SetKind::Strip, SetKind::TruncBall,
                 SetKind::ConeDiff, SetKind::AnnulusI1, SetKind::HemiAnnulus})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown set kind: " + std::string(s));
}

struct SetSpec {
  SetKind kind = SetKind::Cap;
  std::size_t d = 2;
  double alpha = 0;   ///< Cap, ConeDiff
  double rho = 0;     ///< CylinderBall radius, Strip width, TruncBall radius
  double beta = 0;    ///< AnnulusI1, HemiAnnulus
  double r = 1;       ///< Cap sphere radius
  double R = 1;       ///< CylinderBall ball radius
  double offset = 0;  ///< CylinderBall: distance of the axis from the ball centre
  int which = 1;      ///< TruncBall / HemiAnnulus component (1 or 2)
  Vec nu{};           ///< Cap / ConeDiff direction; defaults to e_1

  Domain natural_domain() const {
    switch (kind) {
      case SetKind::Cap: return Domain::Sphere;
      case SetKind::CylinderBall: return Domain::Ball;
      case SetKind::HemiAnnulus: return Domain::Hemisphere;
      default: return Domain::DoubleSphere;
    }
  }

  Vec direction() const {
    if (nu.size() == 0) {
      Vec e(d);
      e[0] = 1;
      return e;
    }
    return nu / norm(nu);
  }

  void validate() const {
    if (d < 2) throw std::invalid_argument("SetSpec: d must be >= 2");
    if (nu.size() != 0 && (nu.size() != d || norm(nu) == 0))
      throw std::invalid_argument("SetSpec: nu must be a nonzero vector in R^d");
    if (which != 1 && which != 2) throw std::invalid_argument("SetSpec: which must be 1 or 2");
    switch (kind) {
      case SetKind::Cap:
      case SetKind::ConeDiff:
        if (!(alpha >= 0 && alpha <= 1)) throw std::invalid_argument("SetSpec: need 0 <= alpha <= 1");
        if (!(r > 0)) throw std::invalid_argument("SetSpec: need r > 0");
        break;
      case SetKind::CylinderBall:
        if (!(rho > 0 && R > 0 && offset >= 0))
          throw std::invalid_argument("SetSpec: need rho, R > 0 and offset >= 0");
        break;
      case SetKind::Strip:
      case SetKind::TruncBall:
        if (!(rho > 0)) throw std::invalid_argument("SetSpec: need rho > 0");
        break;
      case SetKind::AnnulusI1:
        if (!(beta > 0 && beta < 0.5)) throw std::invalid_argument("SetSpec: need 0 < beta < 1/2");
        break;
      case SetKind::HemiAnnulus:
        if (!(beta > 0 && beta < 0.25)) throw std::invalid_argument("SetSpec: need 0 < beta < 1/4");
        break;
    }
  }
};

/// Exact normalized measure when one is known.
inline std::optional<double> exact_fraction(const SetSpec& s) {
  s.validate();
  const std::size_t d = s.d;
  switch (s.kind) {
    case SetKind::Cap: return cap_fraction(d, s.alpha);
    case SetKind::Strip:  // |w1 - w2|^2 = 2 |u|^2 with u a half of a uniform point of S^{2d-1}
      return half_norm_cdf(d, s.rho * s.rho / 2.0);
    case SetKind::TruncBall: return half_norm_cdf(d, s.rho * s.rho);
    case SetKind::ConeDiff:
      return sin_power_integral(static_cast<int>(d) - 2, std::acos(s.alpha)) /
             sin_power_integral(static_cast<int>(d) - 2, std::numbers::pi);
    case SetKind::AnnulusI1:
      return half_norm_cdf(d, 0.5 + s.beta) - half_norm_cdf(d, 0.5 - s.beta);
    case SetKind::CylinderBall:
      if (d == 2) return disk_strip_area(s.R, s.rho, s.offset) / (std::numbers::pi * s.R * s.R);
      return std::nullopt;
    case SetKind::HemiAnnulus: return std::nullopt;
  }
  return std::nullopt;
}

namespace detail {

inline bool in_set(const SetSpec& s, const Vec& nu, const Vec& p) {
  const std::size_t d = s.d;
  switch (s.kind) {
    case SetKind::Cap: return std::abs(dot(p, nu)) >= s.alpha * norm(p);
    case SetKind::CylinderBall: {
      // axis through offset * e_2 along nu
      Vec c(d);
      if (d > 1) c[1] = s.offset;
      const Vec q = p - c;
      const double along = dot(q, nu);
      return norm2(q) - along * along <= s.rho * s.rho;
    }
    case SetKind::Strip: return norm(p.head(d) - p.tail(d)) <= s.rho;
    case SetKind::TruncBall: return norm(s.which == 1 ? p.head(d) : p.tail(d)) <= s.rho;
    case SetKind::ConeDiff: {
      const Vec diff = p.head(d) - p.tail(d);
      return dot(diff, nu) >= s.alpha * norm(diff);
    }
    case SetKind::AnnulusI1: return std::abs(1.0 - 2.0 * norm2(p.head(d))) <= 2.0 * s.beta;
    case SetKind::HemiAnnulus: {
      const Vec w1 = p.head(d), w2 = p.tail(d);
      const double q = s.which == 1 ? norm2(w1) + 2.0 * dot(w1, w2) : norm2(w2) + 2.0 * dot(w1, w2);
      return std::abs(q) <= s.beta;
    }
  }
  return false;
}

inline std::size_t shard_count(std::size_t samples) {
  return std::clamp<std::size_t>(samples / (1u << 18), 1, 256);
}

}  // namespace detail

/// Fraction of the domain occupied by the set. Hemisphere means
/// {|w1| < |w2|} for which = 1 and {|w2| < |w1|} for which = 2, sampled by
/// rejection from S^{2d-1}. Shards draw their seeds from rng, so results do
/// not depend on the thread count.
inline Estimate mc_measure(const SetSpec& spec, Domain domain, std::size_t samples, Rng& rng,
                           unsigned threads = 0) {
  spec.validate();
  if (domain != spec.natural_domain())
    throw std::invalid_argument("mc_measure: domain does not match the set " +
                                std::string(to_string(spec.kind)));
  if (samples == 0) throw std::invalid_argument("mc_measure: samples must be > 0");
  const Vec nu = spec.direction();
  const std::size_t shards = detail::shard_count(samples);
  std::vector<std::uint64_t> seeds(shards);
  for (auto& s : seeds) s = rng();
  std::vector<std::size_t> hits(shards, 0), counts(shards, 0);
  parallel_shards(
      shards,
      [&](std::size_t sh) {
        Rng r = make_rng(seeds[sh]);
        const std::size_t n = samples / shards + (sh < samples % shards ? 1 : 0);
        std::size_t h = 0;
        const std::size_t d = spec.d;
        for (std::size_t i = 0; i < n; ++i) {
          Vec p;
          switch (domain) {
            case Domain::Sphere: p = sample_sphere(d, spec.r, r); break;
            case Domain::DoubleSphere: p = sample_sphere(2 * d, 1.0, r); break;
            case Domain::Ball: p = sample_ball(d, spec.R, r); break;
            case Domain::Hemisphere:
              for (;;) {
                p = sample_sphere(2 * d, 1.0, r);
                const double a = norm2(p.head(d)), b = norm2(p.tail(d));
                if (spec.which == 1 ? a < b : b < a) break;
              }
              break;
          }
          h += detail::in_set(spec, nu, p);
        }
        hits[sh] = h;
        counts[sh] = n;
      },
      threads);
  std::size_t h = 0, n = 0;
  for (std::size_t s = 0; s < shards; ++s) {
    h += hits[s];
    n += counts[s];
  }
  return proportion(h, n);
}

inline Estimate mc_measure(const SetSpec& spec, std::size_t samples, Rng& rng, unsigned threads = 0) {
  return mc_measure(spec, spec.natural_domain(), samples, rng, threads);
}

struct LadderResult {
  std::vector<double> params;
  std::vector<Estimate> estimates;
  PowerFit fit;
};

/// Measures the set at each parameter value (written into the field picked
/// by `field`) and fits estimate = C * param^p.
inline LadderResult mc_ladder(SetSpec spec, double SetSpec::*field, const std::vector<double>& ladder,
                              std::size_t samples, Rng& rng, unsigned threads = 0) {
  LadderResult out;
  std::vector<double> y, se;
  for (double x : ladder) {
    spec.*field = x;
    const auto e = mc_measure(spec, samples, rng, threads);
    out.params.push_back(x);
    out.estimates.push_back(e);
    y.push_back(e.value);
    se.push_back(e.se);
  }
  out.fit = power_fit(ladder, y, se);
  return out;
}

// ---------------------------------------------------------------------------
// Pathological configurations of the finite-size flow

struct PathologyScaling {
  std::vector<double> deltas;
  std::vector<Estimate> probability;
  std::vector<std::size_t> grazing, multiple, two_events;
  std::size_t admissible = 0, rejected = 0;
  PowerFit fit;
};

struct PathologyOutcome {
  Pathology kind = Pathology::Free;
  double time = std::numeric_limits<double>::infinity();  ///< pathological for every delta >= time
};

/// Same classification as detect_pathology, reported as the smallest
/// window length at which the configuration becomes pathological.
inline PathologyOutcome first_pathology(const Configuration& z, double horizon, const FlowParams& p) {
  FlowParams q = p;
  q.policy = PathologyPolicy::Skip;
  Flow f(z, q);
  auto e1 = f.step(horizon);
  if (!e1) return {};
  if (e1->multiple) return {Pathology::Multiple, e1->t};
  const auto& at = f.state();
  const Collision cls =
      e1->kind == EventKind::Binary
          ? classify_binary(e1->w1, at.v[e1->i], at.v[e1->j]).tag
          : classify_ternary(e1->w1, e1->w2, at.v[e1->i], at.v[e1->j], at.v[e1->k]).tag;
  if (cls == Collision::Grazing) return {Pathology::Grazing, e1->t};
  f.apply(*e1);
  auto e2 = f.step(horizon - f.time());
  if (e2) return {Pathology::TwoEventsWithinDelta, e2->t};
  return {Pathology::OneSimpleEvent, std::numeric_limits<double>::infinity()};
}

/// Probability that a uniform admissible configuration of
/// B_rho^{dm} x B_R^{dm} is pathological on [0, delta], for each delta
/// of the ladder on common samples, with a fitted power in delta.
inline PathologyScaling mc_pathology_scaling(std::size_t m, std::size_t d, double rho, double R,
                                             double eps2, double eps3, std::vector<double> deltas,
                                             std::size_t samples, Rng& rng, unsigned threads = 0) {
  if (m < 2 || d < 2) throw std::invalid_argument("mc_pathology_scaling: need m, d >= 2");
  if (deltas.empty()) throw std::invalid_argument("mc_pathology_scaling: empty delta ladder");
  std::sort(deltas.begin(), deltas.end());
  const double dmax = deltas.back();
  if (!(deltas.front() > 0 && rho > 0 && R > 0 && 0 < eps2 && eps2 < eps3))
    throw std::invalid_argument(
        "mc_pathology_scaling: need delta, rho, R > 0 and 0 < eps2 < eps3");
  FlowParams fp;
  fp.eps2 = eps2;
  fp.eps3 = eps3;
  const std::size_t shards = detail::shard_count(samples * 64);
  std::vector<std::uint64_t> seeds(shards);
  for (auto& s : seeds) s = rng();
  const std::size_t L = deltas.size();
  struct Tally {
    std::vector<std::size_t> g, mu, two;
    std::size_t ok = 0, rej = 0;
  };
  std::vector<Tally> tallies(shards);
  parallel_shards(
      shards,
      [&](std::size_t sh) {
        Rng r = make_rng(seeds[sh]);
        Tally t;
        t.g.assign(L, 0);
        t.mu.assign(L, 0);
        t.two.assign(L, 0);
        const std::size_t n = samples / shards + (sh < samples % shards ? 1 : 0);
        while (t.ok < n) {
          const Vec X = sample_ball(d * m, rho, r), V = sample_ball(d * m, R, r);
          std::vector<Vec> xs, vs;
          for (std::size_t i = 0; i < m; ++i) {
            Vec x(d), v(d);
            for (std::size_t a = 0; a < d; ++a) {
              x[a] = X[i * d + a];
              v[a] = V[i * d + a];
            }
            xs.push_back(x);
            vs.push_back(v);
          }
          Configuration z(std::move(xs), std::move(vs));
          if (!admissible(z, eps2, eps3)) {
            ++t.rej;
            continue;
          }
          ++t.ok;
          const auto o = first_pathology(z, dmax, fp);
          if (!is_pathological(o.kind)) continue;
          for (std::size_t l = 0; l < L; ++l) {
            if (o.time > deltas[l]) continue;
            if (o.kind == Pathology::Grazing) ++t.g[l];
            else if (o.kind == Pathology::Multiple) ++t.mu[l];
            else ++t.two[l];
          }
        }
        tallies[sh] = std::move(t);
      },
      threads);
  PathologyScaling out;
  out.deltas = deltas;
  out.grazing.assign(L, 0);
  out.multiple.assign(L, 0);
  out.two_events.assign(L, 0);
  for (const auto& t : tallies) {
    out.admissible += t.ok;
    out.rejected += t.rej;
    for (std::size_t l = 0; l < L; ++l) {
      out.grazing[l] += t.g[l];
      out.multiple[l] += t.mu[l];
      out.two_events[l] += t.two[l];
    }
  }
  std::vector<double> y, se;
  for (std::size_t l = 0; l < L; ++l) {
    const auto e = proportion(out.grazing[l] + out.multiple[l] + out.two_events[l], out.admissible);
    out.probability.push_back(e);
    y.push_back(e.value);
    se.push_back(e.se);
  }
  std::size_t positive = 0;
  for (double v : y) positive += v > 0;
  if (positive >= 2) out.fit = power_fit(deltas, y, se);
  return out;
}

// ---------------------------------------------------------------------------
// Exclusion sets for particle adjunction

struct StabilityParams {
  double alpha = 1e-6, eps0 = 1e-3, R = 4.0, eta = 0.5, delta = 0.5;
  double separation = 100.0;  ///< factor standing in for "much smaller than"

  void validate() const {
    if (!(alpha > 0 && eps0 > 0 && eta > 0 && delta > 0 && R > 1))
      throw std::invalid_argument("StabilityParams: need positive parameters and R > 1");
    if (!(eta < 1 && delta < 1)) throw std::invalid_argument("StabilityParams: need eta, delta < 1");
    if (!(separation * alpha <= eps0))
      throw std::invalid_argument("StabilityParams: need alpha << eps0");
    if (!(separation * eps0 <= eta * delta))
      throw std::invalid_argument("StabilityParams: need eps0 << eta delta");
    if (!(separation * R * alpha <= eta * eps0))
      throw std::invalid_argument("StabilityParams: need R alpha << eta eps0");
  }
};

inline double gamma_prime(double gamma) { return std::sqrt(1.0 - gamma / 2.0); }

struct TernaryBadSets {
  double gamma = 0;
  Estimate omega1, omega2, omega12, a_m1, a_m2, b_12;
  Estimate a_m1_star, a_m2_star, b_12_star;
  Estimate union_pre, union_post;

  /// Bound profiles in gamma (constants omitted) for the six sets above.
  static std::vector<double> bounds(std::size_t d, double gamma) {
    const double dd = static_cast<double>(d);
    const double ac = std::acos(gamma_prime(gamma));
    return {std::pow(gamma, dd / 2), std::pow(gamma, dd / 2), std::pow(gamma, (dd - 1) / 4), ac, ac,
            ac};
  }
  std::vector<Estimate> six() const { return {omega1, omega2, omega12, a_m1, a_m2, b_12}; }
  static std::vector<std::string> names() {
    return {"Omega_1", "Omega_2", "Omega_12", "A_m,m+1", "A_m,m+2", "B_m+1,m+2"};
  }
};

/// Fractions of S^{2d-1} x B_R^{2d} occupied by the ternary exclusion sets
/// for a parent velocity vbar, with gamma = eps2/eps3 and gamma' = sqrt(1 - gamma/2).
inline TernaryBadSets mc_badset_ternary(const StabilityParams& sp, double gamma, const Vec& vbar,
                                        std::size_t samples, Rng& rng, double gamma_margin = 10.0) {
  sp.validate();
  if (!(gamma > 0 && gamma_margin * gamma <= sp.eta * sp.eta))
    throw std::invalid_argument("mc_badset_ternary: need 0 < gamma << eta^2");
  if (norm(vbar) > sp.R) throw std::invalid_argument("mc_badset_ternary: vbar outside B_R");
  const std::size_t d = vbar.size();
  const double sg = std::sqrt(gamma), gp = gamma_prime(gamma);
  std::size_t c[11] = {};
  const auto cone = [gp](const Vec& w, const Vec& u) {
    return std::abs(dot(w, u)) >= gp * norm(w) * norm(u);
  };
  for (std::size_t s = 0; s < samples; ++s) {
    const Vec w = sample_sphere(2 * d, 1.0, rng);
    const Vec V = sample_ball(2 * d, sp.R, rng);
    const Vec w1 = w.head(d), w2 = w.tail(d), v1 = V.head(d), v2 = V.tail(d);
    const bool o1 = norm(w1) <= sg, o2 = norm(w2) <= sg, o12 = norm(w1 - w2) <= sg;
    const bool a1 = cone(w1, v1 - vbar), a2 = cone(w2, v2 - vbar), b12 = cone(w1 - w2, v1 - v2);
    const auto o = ternary_transform(w1, w2, vbar, v1, v2);
    const bool a1s = cone(w1, o.v2 - o.v1), a2s = cone(w2, o.v3 - o.v1),
               b12s = cone(w1 - w2, o.v2 - o.v3);
    const bool flags[11] = {o1, o2, o12, a1, a2, b12, a1s, a2s, b12s,
                            o1 || o2 || o12 || a1 || a2 || b12,
                            o1 || o2 || o12 || a1s || a2s || b12s};
    for (int k = 0; k < 11; ++k) c[k] += flags[k];
  }
  TernaryBadSets r;
  r.gamma = gamma;
  Estimate* slots[11] = {&r.omega1, &r.omega2, &r.omega12, &r.a_m1, &r.a_m2, &r.b_12,
                         &r.a_m1_star, &r.a_m2_star, &r.b_12_star, &r.union_pre, &r.union_post};
  for (int k = 0; k < 11; ++k) *slots[k] = proportion(c[k], samples);
  return r;
}

/// Two or more reference particles; the new particle is adjoined to the last one.
struct BinaryScene {
  std::vector<Vec> ybar, vbar;
  void validate(double eps0) const {
    if (ybar.size() < 2 || ybar.size() != vbar.size())
      throw std::invalid_argument("BinaryScene: need m >= 2 matching positions and velocities");
    for (std::size_t i = 0; i < ybar.size(); ++i)
      for (std::size_t j = i + 1; j < ybar.size(); ++j)
        if (!(norm(ybar[i] - ybar[j]) > eps0))
          throw std::invalid_argument("BinaryScene: reference positions closer than eps0");
  }
};

struct BinaryBadSets {
  double eta = 0;
  Estimate ball;           ///< V_{m,m+1} = S^{d-1} x B_eta(vbar_m)
  Estimate cylinders_pre;  ///< v_{m+1} in some K_eta^i
  Estimate cylinders_post; ///< vbar_m' or v_{m+1}' in some K_eta^i, on the post-collisional half
  Estimate union_pre, union_post;
  double ball_exact = 0;
};

/// Cylinder of radius eta around vbar_i + R (ybar_m - ybar_i): the
/// relative velocities that bring the adjoined particle back towards particle i.
inline bool in_cylinder(const Vec& v, const Vec& vi, const Vec& axis, double eta) {
  const Vec q = v - vi;
  const double along = dot(q, axis);
  return norm2(q) - along * along <= eta * eta;
}

inline BinaryBadSets mc_badset_binary(const BinaryScene& sc, const StabilityParams& sp,
                                      std::size_t samples, Rng& rng) {
  sp.validate();
  sc.validate(sp.eps0);
  const std::size_t m = sc.ybar.size(), d = sc.ybar[0].size();
  const Vec& vm = sc.vbar[m - 1];
  if (norm(vm) + sp.eta > sp.R) throw std::invalid_argument("mc_badset_binary: B_eta(vbar_m) not inside B_R");
  std::vector<Vec> axes;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    Vec a = sc.ybar[m - 1] - sc.ybar[i];
    axes.push_back(a / norm(a));
  }
  std::size_t c_ball = 0, c_pre = 0, c_post = 0, c_upre = 0, c_upost = 0, n_plus = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const Vec w = sample_sphere(d, 1.0, rng);
    const Vec v = sample_ball(d, sp.R, rng);
    const bool ball = norm(v - vm) <= sp.eta;
    bool pre = false;
    for (std::size_t i = 0; i + 1 < m; ++i) pre = pre || in_cylinder(v, sc.vbar[i], axes[i], sp.eta);
    c_ball += ball;
    c_pre += pre;
    if (b2(w, v - vm) > 0) {
      ++n_plus;
      auto [vmp, vnp] = binary_transform(w, vm, v);
      bool post = false;
      for (std::size_t i = 0; i + 1 < m; ++i)
        post = post || in_cylinder(vmp, sc.vbar[i], axes[i], sp.eta) ||
               in_cylinder(vnp, sc.vbar[i], axes[i], sp.eta);
      c_post += post;
      c_upre += ball || pre;
      c_upost += ball || post;
    }
  }
  BinaryBadSets r;
  r.eta = sp.eta;
  r.ball = proportion(c_ball, samples);
  r.cylinders_pre = proportion(c_pre, samples);
  r.cylinders_post = proportion(c_post, n_plus);
  r.union_pre = proportion(c_upre, n_plus);
  r.union_post = proportion(c_upost, n_plus);
  r.ball_exact = std::pow(sp.eta / sp.R, static_cast<double>(d));
  return r;
}

}  // namespace tk
