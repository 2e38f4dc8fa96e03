#pragma once

#include <cmath>
#include <stdexcept>
#include <string_view>
#include <utility>

#include "ternkin/geometry.hpp"

namespace tk {

inline constexpr double kUnitTol = 1e-9;

struct BinaryImpact {
  Vec w1;
};

struct TernaryImpact {
  Vec w1, w2;
};

enum class Collision { Precollisional, Postcollisional, Grazing };

inline std::string_view to_string(Collision c) {
  switch (c) {
    case Collision::Precollisional: return "pre";
    case Collision::Postcollisional: return "post";
    case Collision::Grazing: return "grazing";
  }
  return "?";
}

struct CollisionClass {
  Collision tag;
  double tolerance;
  double cross_section;
};

inline void require_unit(const Vec& w) {
  if (std::abs(norm2(w) - 1.0) > kUnitTol)
    throw std::invalid_argument("binary impact direction is not a unit vector");
}

inline void require_impact(const Vec& w1, const Vec& w2) {
  Vec::same_dim(w1, w2);
  if (std::abs(norm2(w1) + norm2(w2) - 1.0) > kUnitTol)
    throw std::invalid_argument("ternary impact pair is not on the unit sphere S^{2d-1}");
}

/// (v1', v2') with v1' = v1 + <w, v2-v1> w and v2' = v2 - <w, v2-v1> w.
inline std::pair<Vec, Vec> binary_transform(const Vec& w1, const Vec& v1, const Vec& v2) {
  require_unit(w1);
  Vec::same_dim(v1, v2);
  const double a = dot(w1, v2 - v1);
  return {v1 + a * w1, v2 - a * w1};
}

struct TernaryOutcome {
  Vec v1, v2, v3;
  double c;
};

inline double ternary_coefficient(const Vec& w1, const Vec& w2, const Vec& v1, const Vec& v2,
                                  const Vec& v3) {
  return (dot(w1, v2 - v1) + dot(w2, v3 - v1)) / (1.0 + dot(w1, w2));
}

inline TernaryOutcome ternary_transform(const Vec& w1, const Vec& w2, const Vec& v1,
                                        const Vec& v2, const Vec& v3) {
  require_impact(w1, w2);
  Vec::same_dim(v1, v2);
  Vec::same_dim(v1, v3);
  const double q = 1.0 + dot(w1, w2);
  // |<w1,w2>| <= (|w1|^2+|w2|^2)/2 = 1/2 on the sphere
  if (q < 0.5 - kUnitTol || q > 1.5 + kUnitTol)
    throw std::invalid_argument("ternary impact pair gives 1+<w1,w2> outside [1/2,3/2]");
  const double c = (dot(w1, v2 - v1) + dot(w2, v3 - v1)) / q;
  return {v1 + c * (w1 + w2), v2 - c * w1, v3 - c * w2, c};
}

inline TernaryOutcome ternary_transform(const TernaryImpact& imp, const Vec& v1, const Vec& v2,
                                        const Vec& v3) {
  return ternary_transform(imp.w1, imp.w2, v1, v2, v3);
}

inline double default_tolerance(double rel_speed) { return 1e-12 * (1.0 + rel_speed); }

inline CollisionClass classify_by_sign(double cross, double tol) {
  if (cross < -tol) return {Collision::Precollisional, tol, cross};
  if (cross > tol) return {Collision::Postcollisional, tol, cross};
  return {Collision::Grazing, tol, cross};
}

/// Sign of b2(w, vj - vi). A negative tol selects the default band.
inline CollisionClass classify_binary(const Vec& w1, const Vec& vi, const Vec& vj,
                                      double tol = -1.0) {
  const Vec dv = vj - vi;
  if (tol < 0) tol = default_tolerance(norm(dv));
  return classify_by_sign(b2(w1, dv), tol);
}

inline CollisionClass classify_ternary(const Vec& w1, const Vec& w2, const Vec& vi,
                                       const Vec& vj, const Vec& vk, double tol = -1.0) {
  const Vec dj = vj - vi, dk = vk - vi;
  if (tol < 0) tol = default_tolerance(std::sqrt(norm2(dj) + norm2(dk)));
  return classify_by_sign(b3(w1, w2, dj, dk), tol);
}

inline CollisionClass classify_ternary(const TernaryImpact& imp, const Vec& vi, const Vec& vj,
                                       const Vec& vk, double tol = -1.0) {
  return classify_ternary(imp.w1, imp.w2, vi, vj, vk, tol);
}

// ---------------------------------------------------------------------------
// Binary transition map  w -> r^{-1}(v1' - v2').

/// The map extended to all of R^d: r^{-1}(u - 2<w,u>w), u = v1 - v2.
inline Vec transition_map_extended(const Vec& v1, const Vec& v2, const Vec& w) {
  const Vec u = v1 - v2;
  const double r = norm(u);
  return (u - 2.0 * dot(w, u) * w) / r;
}

struct TransitionResult {
  Vec nu1;
  double jac;          ///< determinant of the R^d -> R^d derivative
  double surface_jac;  ///< Jacobian of the restriction S^{d-1} -> S^{d-1}
};

/// jac = 2^{d+1} r^{-d} b2(w, v2-v1)^d.
/// surface_jac = 2^{d-1} (b2/r)^{d-2}; this is the density relating
/// surface measures, so that  int_{S+} g(J(w)) surface_jac dw = int_S g.
inline TransitionResult transition_map(const Vec& v1, const Vec& v2, const Vec& w1) {
  require_unit(w1);
  const Vec u = v1 - v2;
  const double r = norm(u);
  if (!(r > 0)) throw std::invalid_argument("transition_map: zero relative velocity");
  const double b = b2(w1, v2 - v1);
  if (!(b > 0)) throw std::invalid_argument("transition_map: non-positive cross-section");
  const auto [p1, p2] = binary_transform(w1, v1, v2);
  const double d = static_cast<double>(v1.size());
  TransitionResult res{(p1 - p2) / r, std::pow(2.0, d + 1) * std::pow(b / r, d),
                       std::pow(2.0, d - 1) * std::pow(b / r, d - 2)};
  return res;
}

/// Inverse direction: velocities after the collision written through nu1.
inline std::pair<Vec, Vec> post_velocities_from_nu(const Vec& v1, const Vec& v2, const Vec& nu1) {
  const double r = d2(v1, v2);
  const Vec mid = 0.5 * (v1 + v2);
  return {mid + 0.5 * r * nu1, mid - 0.5 * r * nu1};
}

}  // namespace tk
