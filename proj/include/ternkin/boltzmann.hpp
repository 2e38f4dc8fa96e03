#pragma once

// Particle solver for the spatially homogeneous binary-ternary Boltzmann
// equation, weak-form operator estimates and relaxation diagnostics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "ternkin/collision.hpp"
#include "ternkin/geometry.hpp"
#include "ternkin/stats.hpp"

namespace tk {

struct VelocityEnsemble {
  std::vector<Vec> v;
  double weight = 1.0;  ///< f = weight * empirical law
  double time = 0.0;

  std::size_t size() const noexcept { return v.size(); }
  std::size_t dim() const noexcept { return v.empty() ? 0 : v[0].size(); }
  void validate() const {
    if (v.size() < 3) throw std::invalid_argument("VelocityEnsemble: need n >= 3");
    for (const auto& u : v) {
      Vec::same_dim(u, v[0]);
      if (!u.all_finite()) throw std::invalid_argument("VelocityEnsemble: non-finite velocity");
    }
  }
};

inline VelocityEnsemble maxwellian_ensemble(std::size_t n, double beta, std::size_t d, Rng& rng) {
  if (n < 3) throw std::invalid_argument("maxwellian_ensemble: need n >= 3");
  if (!(beta > 0)) throw std::invalid_argument("maxwellian_ensemble: beta must be > 0");
  VelocityEnsemble e;
  e.v.reserve(n);
  const double sd = 1.0 / std::sqrt(beta);
  for (std::size_t i = 0; i < n; ++i) e.v.push_back(gaussian_vec(d, rng, sd));
  return e;
}

/// Half the particles at temperature t1, half at t2 (variance per component).
inline VelocityEnsemble bimodal_ensemble(std::size_t n, double t1, double t2, std::size_t d,
                                         Rng& rng) {
  if (n < 3) throw std::invalid_argument("bimodal_ensemble: need n >= 3");
  VelocityEnsemble e;
  for (std::size_t i = 0; i < n; ++i)
    e.v.push_back(gaussian_vec(d, rng, std::sqrt(i % 2 == 0 ? t1 : t2)));
  return e;
}

enum class TernaryKernel {
  Scaled,  ///< b3+ / sqrt(1 + <w1, w2>)
  Flux,    ///< b3+, the boundary flux of the hard-core ternary zone
};

inline TernaryKernel parse_kernel(std::string_view s) {
  if (s == "scaled") return TernaryKernel::Scaled;
  if (s == "flux") return TernaryKernel::Flux;
  throw std::invalid_argument("unknown ternary kernel: " + std::string(s));
}

struct SolverParams {
  double dt = 0.01;
  double kappa2 = 1.0, kappa3 = 1.0;
  double R = 0.0;  ///< velocity bound for the majorants; the current max speed is used if larger
  TernaryKernel kernel = TernaryKernel::Scaled;

  void validate() const {
    if (!(dt > 0)) throw std::invalid_argument("SolverParams: dt must be > 0");
    if (!(kappa2 >= 0 && kappa3 >= 0)) throw std::invalid_argument("SolverParams: kappa must be >= 0");
    if (!(R >= 0)) throw std::invalid_argument("SolverParams: R must be >= 0");
  }
};

inline double ternary_kernel(TernaryKernel k, const Vec& w1, const Vec& w2, const Vec& u1,
                             const Vec& u2) {
  const double b = b3(w1, w2, u1, u2);
  if (b <= 0) return 0.0;
  return k == TernaryKernel::Scaled ? b / std::sqrt(1.0 + dot(w1, w2)) : b;
}

/// Upper bounds of the kernels when every speed is at most R.
inline double binary_majorant(double R) { return 2.0 * R; }
inline double ternary_majorant(TernaryKernel k, double R) {
  return k == TernaryKernel::Scaled ? 4.0 * std::sqrt(2.0) * R : 2.0 * std::sqrt(2.0) * R;
}

/// Rate constants that reproduce the collision frequencies of the hard-core
/// particle flow with n = N in a periodic box of the given volume.
struct MatchedRates {
  double kappa2, kappa3;
};
inline MatchedRates particle_matched_rates(std::size_t N, std::size_t d, double eps2, double eps3,
                                           double volume = 1.0) {
  const double n = static_cast<double>(N), dd = static_cast<double>(d);
  return {(n - 1.0) * std::pow(eps2, dd - 1.0) / volume,
          (n - 1.0) * (n - 2.0) / 6.0 * std::pow(std::sqrt(2.0) * eps3, 2.0 * dd - 1.0) /
              (volume * volume)};
}

struct StepStats {
  std::size_t candidates2 = 0, accepted2 = 0, candidates3 = 0, accepted3 = 0;
};

namespace detail {
inline double max_speed(const VelocityEnsemble& e) {
  double m = 0;
  for (const auto& v : e.v) m = std::max(m, norm2(v));
  return std::sqrt(m);
}
}  // namespace detail

/// Advances the ensemble by dt. Candidate collisions arrive as a Poisson
/// process at the majorant rate, re-evaluated after each accepted collision,
/// so the run is exact in time. Pairs collide at rate
/// kappa2/(n-1) * int b2+ dw and ordered triples (centre a) at rate
/// kappa3/((n-1)(n-2)) * int K3 dw; every participant is updated.
inline StepStats dsmc_step(VelocityEnsemble& e, const SolverParams& p, Rng& rng) {
  p.validate();
  e.validate();
  StepStats st;
  const std::size_t n = e.size(), d = e.dim();
  const double nn = static_cast<double>(n);
  const double s1 = unit_sphere_area(static_cast<int>(d)),
               s2 = unit_sphere_area(static_cast<int>(2 * d));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::exponential_distribution<double> expo(1.0);
  double t = 0, vmax = detail::max_speed(e);
  for (;;) {
    const double R = std::max(p.R, vmax);
    const double r2 = nn * p.kappa2 * s1 * binary_majorant(R) / 2.0;
    const double r3 = nn * p.kappa3 * s2 * ternary_majorant(p.kernel, R);
    const double tot = r2 + r3;
    if (!(tot > 0)) break;
    bool changed = false;
    while (!changed) {
      t += expo(rng) / tot;
      if (t >= p.dt) {
        e.time += p.dt;
        return st;
      }
      if (uniform01(rng) * tot < r2) {
        ++st.candidates2;
        const std::size_t a = pick(rng);
        std::size_t b = pick(rng);
        while (b == a) b = pick(rng);
        const Vec w = sample_sphere(d, 1.0, rng);
        const double k = b2(w, e.v[b] - e.v[a]);
        if (k > 0 && uniform01(rng) * binary_majorant(R) < k) {
          auto [va, vb] = binary_transform(w, e.v[a], e.v[b]);
          e.v[a] = va;
          e.v[b] = vb;
          vmax = std::max({vmax, norm(va), norm(vb)});
          ++st.accepted2;
          changed = true;
        }
      } else {
        ++st.candidates3;
        const std::size_t a = pick(rng);
        std::size_t b = pick(rng), c = pick(rng);
        while (b == a) b = pick(rng);
        while (c == a || c == b) c = pick(rng);
        const Vec w = sample_sphere(2 * d, 1.0, rng);
        const Vec w1 = w.head(d), w2 = w.tail(d);
        const double k = ternary_kernel(p.kernel, w1, w2, e.v[b] - e.v[a], e.v[c] - e.v[a]);
        if (k > 0 && uniform01(rng) * ternary_majorant(p.kernel, R) < k) {
          const auto o = ternary_transform(w1, w2, e.v[a], e.v[b], e.v[c]);
          e.v[a] = o.v1;
          e.v[b] = o.v2;
          e.v[c] = o.v3;
          vmax = std::max({vmax, norm(o.v1), norm(o.v2), norm(o.v3)});
          ++st.accepted3;
          changed = true;
        }
      }
    }
  }
  e.time += p.dt;
  return st;
}

// ---------------------------------------------------------------------------
// Weak forms

enum class Operator { Q2, Q3 };
enum class WeakForm {
  Central,      ///< phi(v') - phi(v) for the tagged particle only
  Symmetrized,  ///< change of phi summed over every participant
};

using TestFunction = std::function<double(const Vec&)>;

/// Monte Carlo estimate of int Q phi dv with f = weight * empirical law.
inline Estimate collision_operator_moment(const VelocityEnsemble& e, const TestFunction& phi,
                                          Operator which, std::size_t mc_samples, Rng& rng,
                                          WeakForm form = WeakForm::Central,
                                          TernaryKernel kernel = TernaryKernel::Scaled) {
  if (e.weight == 0.0 || e.v.empty()) return {0.0, 0.0, mc_samples};
  e.validate();
  const std::size_t n = e.size(), d = e.dim();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  RunningStat st;
  if (which == Operator::Q2) {
    const double area = unit_sphere_area(static_cast<int>(d)), scale = e.weight * e.weight;
    for (std::size_t s = 0; s < mc_samples; ++s) {
      const std::size_t a = pick(rng);
      std::size_t b = pick(rng);
      while (b == a) b = pick(rng);
      const Vec w = sample_sphere(d, 1.0, rng);
      const double k = b2(w, e.v[b] - e.v[a]);
      double val = 0;
      if (k > 0) {
        auto [va, vb] = binary_transform(w, e.v[a], e.v[b]);
        const double delta = form == WeakForm::Central
                                 ? phi(va) - phi(e.v[a])
                                 : 0.5 * (phi(va) + phi(vb) - phi(e.v[a]) - phi(e.v[b]));
        val = scale * area * k * delta;
      }
      st.push(val);
    }
  } else {
    const double area = unit_sphere_area(static_cast<int>(2 * d)), scale = e.weight * e.weight * e.weight;
    for (std::size_t s = 0; s < mc_samples; ++s) {
      const std::size_t a = pick(rng);
      std::size_t b = pick(rng), c = pick(rng);
      while (b == a) b = pick(rng);
      while (c == a || c == b) c = pick(rng);
      const Vec w = sample_sphere(2 * d, 1.0, rng);
      const Vec w1 = w.head(d), w2 = w.tail(d);
      const double k = ternary_kernel(kernel, w1, w2, e.v[b] - e.v[a], e.v[c] - e.v[a]);
      double val = 0;
      if (k > 0) {
        const auto o = ternary_transform(w1, w2, e.v[a], e.v[b], e.v[c]);
        const double delta =
            form == WeakForm::Central
                ? phi(o.v1) - phi(e.v[a])
                : phi(o.v1) + phi(o.v2) + phi(o.v3) - phi(e.v[a]) - phi(e.v[b]) - phi(e.v[c]);
        val = scale * area * k * delta;
      }
      st.push(val);
    }
  }
  return {st.mean, st.se(), st.n};
}

// ---------------------------------------------------------------------------
// Relaxation runs

struct MomentRecord {
  double t = 0;
  double mass = 0;
  Vec momentum;
  double energy = 0;  ///< mean of |v|^2 / 2
  double fourth = 0;  ///< mean of |v|^4
  double entropy = 0; ///< plug-in estimate of int f log f
  double fourth_se = 0, entropy_se = 0;
};

/// Histogram plug-in of int f log f on a cube of half-width 6 sigma.
inline std::pair<double, double> plugin_entropy(const VelocityEnsemble& e, std::size_t bins = 0) {
  const std::size_t n = e.size(), d = e.dim();
  double m2 = 0;
  for (const auto& v : e.v) m2 += norm2(v);
  const double sigma = std::sqrt(m2 / (static_cast<double>(n) * static_cast<double>(d)));
  if (bins == 0) bins = std::max<std::size_t>(4, static_cast<std::size_t>(std::pow(static_cast<double>(n), 1.0 / (d + 2.0))));
  const double half = 6.0 * sigma, w = 2.0 * half / static_cast<double>(bins);
  std::vector<double> cnt(static_cast<std::size_t>(std::pow(bins, d)), 0.0);
  std::vector<std::size_t> cell(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t id = 0;
    for (std::size_t a = 0; a < d; ++a) {
      const double u = (e.v[i][a] + half) / w;
      const auto b = static_cast<std::size_t>(std::clamp(u, 0.0, static_cast<double>(bins) - 1e-9));
      id = id * bins + b;
    }
    cell[i] = id;
    cnt[id] += 1;
  }
  const double vol = std::pow(w, static_cast<double>(d));
  RunningStat st;
  for (std::size_t i = 0; i < n; ++i) st.push(std::log(cnt[cell[i]] / (static_cast<double>(n) * vol)));
  return {st.mean, st.se()};
}

inline MomentRecord moments(const VelocityEnsemble& e) {
  MomentRecord r;
  r.t = e.time;
  const double n = static_cast<double>(e.size());
  r.mass = e.weight * n;
  r.momentum = Vec(e.dim());
  RunningStat f4;
  double en = 0;
  for (const auto& v : e.v) {
    r.momentum += v;
    const double s = norm2(v);
    en += 0.5 * s;
    f4.push(s * s);
  }
  r.momentum /= n;
  r.energy = en / n;
  r.fourth = f4.mean;
  r.fourth_se = f4.se();
  std::tie(r.entropy, r.entropy_se) = plugin_entropy(e);
  return r;
}

struct RelaxResult {
  std::vector<MomentRecord> series;  ///< steps + 1 records including the initial one
  VelocityEnsemble final_state;
  StepStats totals;
};

inline RelaxResult relax_run(VelocityEnsemble e, const SolverParams& p, std::size_t steps,
                             Rng& rng) {
  RelaxResult res;
  res.series.push_back(moments(e));
  for (std::size_t s = 0; s < steps; ++s) {
    const auto st = dsmc_step(e, p, rng);
    res.totals.candidates2 += st.candidates2;
    res.totals.accepted2 += st.accepted2;
    res.totals.candidates3 += st.candidates3;
    res.totals.accepted3 += st.accepted3;
    res.series.push_back(moments(e));
  }
  res.final_state = std::move(e);
  return res;
}

/// E|v|^4 for a centred Gaussian with variance T per component in R^d.
inline double gaussian_fourth_moment(std::size_t d, double T) {
  const double dd = static_cast<double>(d);
  return dd * (dd + 2.0) * T * T;
}

}  // namespace tk
