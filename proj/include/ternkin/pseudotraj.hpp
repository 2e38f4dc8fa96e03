#pragma once

// Backward-in-time pseudo-trajectories of the Boltzmann and BBGKY
// hierarchies: free streaming between prescribed times with one or two
// particles adjoined to a chosen parent at each time.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ternkin/collision.hpp"
#include "ternkin/dynamics.hpp"
#include "ternkin/geometry.hpp"

namespace tk {

/// Indices are 0-based: parent[i] < s + sigma_tilde[i] (the count before step i+1).
struct CollisionSequence {
  std::size_t s = 0;
  std::vector<int> sigma;              ///< 1 = binary adjunction, 2 = ternary
  std::vector<int> jumps;              ///< -1 pre-collisional, +1 post-collisional
  std::vector<std::size_t> parent;

  std::size_t k() const noexcept { return sigma.size(); }
  /// Prefix sums with sigma_tilde[0] = 0 (length k + 1).
  std::vector<std::size_t> sigma_tilde() const {
    std::vector<std::size_t> out(sigma.size() + 1, 0);
    for (std::size_t i = 0; i < sigma.size(); ++i)
      out[i + 1] = out[i] + static_cast<std::size_t>(sigma[i]);
    return out;
  }
  void validate() const {
    if (sigma.empty()) throw std::invalid_argument("CollisionSequence: k must be >= 1");
    if (s == 0) throw std::invalid_argument("CollisionSequence: s must be >= 1");
    if (jumps.size() != sigma.size() || parent.size() != sigma.size())
      throw std::invalid_argument("CollisionSequence: sigma/J/M length mismatch");
    std::size_t count = s;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
      if (sigma[i] != 1 && sigma[i] != 2)
        throw std::invalid_argument("CollisionSequence: sigma entries must be 1 or 2");
      if (jumps[i] != 1 && jumps[i] != -1)
        throw std::invalid_argument("CollisionSequence: J entries must be +-1");
      if (parent[i] >= count)
        throw std::out_of_range("CollisionSequence: parent index " + std::to_string(parent[i]) +
                                " out of range at step " + std::to_string(i + 1));
      count += static_cast<std::size_t>(sigma[i]);
    }
  }
};

struct AdjunctionData {
  double t = 0;                          ///< starting time t_0
  std::vector<double> times;             ///< t_1 > ... > t_k
  std::vector<Vec> omega;                ///< impact in S^{d sigma_i - 1}
  std::vector<std::vector<Vec>> v;       ///< sigma_i incoming velocities

  void validate(const CollisionSequence& seq, std::size_t d) const {
    const std::size_t k = seq.k();
    if (times.size() != k || omega.size() != k || v.size() != k)
      throw std::invalid_argument("AdjunctionData: length mismatch with sequence");
    double prev = t;
    for (std::size_t i = 0; i < k; ++i) {
      if (!(times[i] < prev) || times[i] < 0)
        throw std::invalid_argument("AdjunctionData: times must satisfy t > t_1 > ... > t_k >= 0");
      prev = times[i];
      const auto sg = static_cast<std::size_t>(seq.sigma[i]);
      if (omega[i].size() != d * sg || v[i].size() != sg)
        throw std::invalid_argument("AdjunctionData: impact/velocity dimension mismatch");
      if (std::abs(norm(omega[i]) - 1.0) > kUnitTol)
        throw std::invalid_argument("AdjunctionData: impact must be a unit vector");
      for (const auto& u : v[i])
        if (u.size() != d) throw std::invalid_argument("AdjunctionData: velocity dimension mismatch");
    }
  }
};

enum class Flavor { Boltzmann, Bbgky };

struct PseudoTrajectory {
  Flavor flavor = Flavor::Boltzmann;
  double eps2 = 0, eps3 = 0;
  std::vector<double> times;              ///< t_0, t_1, ..., t_k, 0
  std::vector<Configuration> states;      ///< Z(t_i^+) for i = 0..k+1
};

namespace detail {

inline PseudoTrajectory build_pseudo(const Configuration& zs, const CollisionSequence& seq,
                                     const AdjunctionData& data, double eps2, double eps3,
                                     Flavor flavor) {
  seq.validate();
  if (zs.m() != seq.s)
    throw std::invalid_argument("pseudo-trajectory: configuration size differs from s");
  const std::size_t d = zs.dim(), k = seq.k();
  data.validate(seq, d);
  const double r3 = std::sqrt(2.0) * eps3;

  PseudoTrajectory pt;
  pt.flavor = flavor;
  pt.eps2 = eps2;
  pt.eps3 = eps3;
  pt.times.push_back(data.t);
  pt.states.push_back(zs);
  Configuration cur = zs;  // Z(t_{i-1}^-)
  double tprev = data.t;
  for (std::size_t i = 0; i < k; ++i) {
    const double ti = data.times[i];
    for (std::size_t l = 0; l < cur.m(); ++l) cur.x[l] -= (tprev - ti) * cur.v[l];
    pt.times.push_back(ti);
    pt.states.push_back(cur);

    const std::size_t m = seq.parent[i];
    const Vec xm = cur.x[m];
    const Vec& w = data.omega[i];
    const double sign = seq.jumps[i];
    if (seq.sigma[i] == 1) {
      Vec vnew = data.v[i][0];
      if (seq.jumps[i] == 1) {
        auto [vm, vn] = binary_transform(w, cur.v[m], vnew);
        cur.v[m] = vm;
        vnew = vn;
      }
      cur.x.push_back(xm + (sign * eps2) * w);
      cur.v.push_back(vnew);
    } else {
      const Vec w1 = w.head(d), w2 = w.tail(d);
      Vec va = data.v[i][0], vb = data.v[i][1];
      if (seq.jumps[i] == 1) {
        const auto o = ternary_transform(w1, w2, cur.v[m], va, vb);
        cur.v[m] = o.v1;
        va = o.v2;
        vb = o.v3;
      }
      cur.x.push_back(xm + (sign * r3) * w1);
      cur.v.push_back(va);
      cur.x.push_back(xm + (sign * r3) * w2);
      cur.v.push_back(vb);
    }
    tprev = ti;
  }
  for (std::size_t l = 0; l < cur.m(); ++l) cur.x[l] -= tprev * cur.v[l];
  pt.times.push_back(0.0);
  pt.states.push_back(std::move(cur));
  return pt;
}

}  // namespace detail

inline PseudoTrajectory boltzmann_pseudo(const Configuration& zs, const CollisionSequence& seq,
                                         const AdjunctionData& data) {
  return detail::build_pseudo(zs, seq, data, 0.0, 0.0, Flavor::Boltzmann);
}

/// eps2 = eps3 = 0 is accepted and gives the Boltzmann construction.
inline PseudoTrajectory bbgky_pseudo(const Configuration& zs, const CollisionSequence& seq,
                                     const AdjunctionData& data, double eps2, double eps3) {
  const bool degenerate = eps2 == 0.0 && eps3 == 0.0;
  if (!degenerate && !(eps2 > 0 && eps2 < eps3))
    throw std::invalid_argument("bbgky_pseudo: need 0 < eps2 < eps3");
  return detail::build_pseudo(zs, seq, data, eps2, eps3, Flavor::Bbgky);
}

struct SampledSequence {
  CollisionSequence seq;
  AdjunctionData data;
};

/// Uniform sigma, J and M; times uniform on the delta-separated set
/// {t - t_1 >= delta, t_i - t_{i+1} >= delta, t_k >= delta}; velocities
/// uniform in the ball B_R; impacts uniform on the sphere. When zs is given,
/// the impacts of j = +1 steps are drawn from the post-collisional half
/// (b > 0) relative to the parent velocity along the trajectory.
inline SampledSequence sample_sequence(std::size_t s, std::size_t k, double delta, double t,
                                       double R, std::size_t d, Rng& rng,
                                       const Configuration* zs = nullptr) {
  if (k == 0 || s == 0) throw std::invalid_argument("sample_sequence: need s, k >= 1");
  if (!(delta >= 0) || !(R > 0)) throw std::invalid_argument("sample_sequence: need delta >= 0, R > 0");
  const double slack = t - static_cast<double>(k + 1) * delta;
  if (!(slack > 0))
    throw std::invalid_argument("sample_sequence: infeasible, need t > (k + 1) delta");
  if (zs && (zs->m() != s || zs->dim() != d))
    throw std::invalid_argument("sample_sequence: configuration does not match s and d");

  SampledSequence out;
  auto& seq = out.seq;
  auto& data = out.data;
  seq.s = s;
  data.t = t;
  std::vector<double> u(k);
  for (auto& x : u) x = slack * uniform01(rng);
  std::sort(u.begin(), u.end());
  for (std::size_t i = 1; i <= k; ++i)
    data.times.push_back(u[k - i] + static_cast<double>(k + 1 - i) * delta);

  std::vector<Vec> vel;  // Boltzmann velocities, tracked for the half-sphere restriction
  if (zs) vel = zs->v;
  std::size_t count = s;
  for (std::size_t i = 0; i < k; ++i) {
    const int sg = uniform01(rng) < 0.5 ? 1 : 2;
    const int j = uniform01(rng) < 0.5 ? -1 : 1;
    std::uniform_int_distribution<std::size_t> pick(0, count - 1);
    const std::size_t m = pick(rng);
    seq.sigma.push_back(sg);
    seq.jumps.push_back(j);
    seq.parent.push_back(m);
    std::vector<Vec> vs;
    for (int a = 0; a < sg; ++a) vs.push_back(sample_ball(d, R, rng));
    Vec w = sample_sphere(d * static_cast<std::size_t>(sg), 1.0, rng);
    if (zs && j == 1) {
      const auto cross = [&](const Vec& ww) {
        return sg == 1 ? b2(ww, vs[0] - vel[m])
                       : b3(ww.head(d), ww.tail(d), vs[0] - vel[m], vs[1] - vel[m]);
      };
      if (cross(w) == 0.0) w = sample_sphere(d * static_cast<std::size_t>(sg), 1.0, rng);
      if (cross(w) < 0) w = -w;
    }
    if (zs) {
      if (j == 1 && sg == 1) {
        auto [vm, vn] = binary_transform(w, vel[m], vs[0]);
        vel[m] = vm;
        vel.push_back(vn);
      } else if (j == 1) {
        const auto o = ternary_transform(w.head(d), w.tail(d), vel[m], vs[0], vs[1]);
        vel[m] = o.v1;
        vel.push_back(o.v2);
        vel.push_back(o.v3);
      } else {
        for (const auto& x : vs) vel.push_back(x);
      }
    }
    data.omega.push_back(std::move(w));
    data.v.push_back(std::move(vs));
    count += static_cast<std::size_t>(sg);
  }
  return out;
}

struct ProximityReport {
  std::vector<double> max_gap;  ///< per i = 1..k+1, max over particles of |x^N - x^inf|
  std::vector<double> bound;    ///< sqrt(2) eps3 (i - 1)
  double max_velocity_gap = 0;
  bool velocities_equal = true;
  bool holds = true;
};

inline ProximityReport proximity_check(const Configuration& zs, const CollisionSequence& seq,
                                       const AdjunctionData& data, double eps2, double eps3) {
  const auto inf = boltzmann_pseudo(zs, seq, data);
  const auto fin = bbgky_pseudo(zs, seq, data, eps2, eps3);
  ProximityReport rep;
  const double r3 = std::sqrt(2.0) * eps3;
  for (std::size_t i = 1; i < inf.states.size(); ++i) {
    const auto& a = inf.states[i];
    const auto& b = fin.states[i];
    double gap = 0;
    for (std::size_t l = 0; l < a.m(); ++l) {
      gap = std::max(gap, norm(a.x[l] - b.x[l]));
      const double dv = norm(a.v[l] - b.v[l]);
      rep.max_velocity_gap = std::max(rep.max_velocity_gap, dv);
    }
    const double bnd = r3 * static_cast<double>(i - 1);
    rep.max_gap.push_back(gap);
    rep.bound.push_back(bnd);
    if (gap > bnd * (1.0 + 1e-12) + 1e-15) rep.holds = false;
  }
  rep.velocities_equal = rep.max_velocity_gap <= 1e-12;
  rep.holds = rep.holds && rep.velocities_equal;
  return rep;
}

}  // namespace tk
