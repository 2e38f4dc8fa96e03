#pragma once

// Multi-module drivers: the finite-N particle flow against the DSMC
// solution of the limiting equation.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ternkin/boltzmann.hpp"
#include "ternkin/dynamics.hpp"
#include "ternkin/hierarchy.hpp"
#include "ternkin/parallel.hpp"
#include "ternkin/stats.hpp"

namespace tk {

/// Limits of particle_matched_rates as N -> infinity with eps2, eps3 from
/// scaled_epsilons in a unit box.
inline MatchedRates limit_rates(std::size_t d, double c2 = 1.0, double c3 = 1.0) {
  const double dd = static_cast<double>(d);
  return {c2, std::pow(2.0, (2.0 * dd - 1.0) / 2.0) * c3 * c3 / 6.0};
}

/// Each velocity is Gaussian with variance t_cold or t_hot per component,
/// with equal probability.
inline VelocityLaw two_temperature_law(std::size_t d, double t_cold, double t_hot) {
  if (!(t_cold > 0 && t_hot > 0)) throw std::invalid_argument("two_temperature_law: temperatures must be > 0");
  return [=](Rng& rng) {
    const double t = uniform01(rng) < 0.5 ? t_cold : t_hot;
    return gaussian_vec(d, rng, std::sqrt(t));
  };
}

struct ConvergenceConfig {
  std::size_t d = 2;
  std::vector<std::size_t> Ns{64, 128, 256};
  double c2 = 1.0, c3 = 1.0;
  double horizon = 0.5;
  double t_cold = 0.3, t_hot = 1.7;
  std::size_t particle_samples = 1'000'000;  ///< per N: runs = ceil(samples / N)
  std::size_t dsmc_runs = 10;
  std::size_t dsmc_particles = 200'000;
  double dsmc_dt = 0.01;
  TernaryKernel kernel = TernaryKernel::Flux;
  std::size_t bins = 6;
  double vmax = 3.5;
  PathologyPolicy policy = PathologyPolicy::Skip;

  void validate() const {
    if (d < 2) throw std::invalid_argument("convergence: d must be >= 2");
    if (Ns.empty()) throw std::invalid_argument("convergence: empty N ladder");
    for (auto n : Ns)
      if (n < 3) throw std::invalid_argument("convergence: every N must be >= 3");
    if (!(horizon > 0 && dsmc_dt > 0 && vmax > 0 && c2 > 0 && c3 > 0))
      throw std::invalid_argument("convergence: horizon, dt, vmax, c2, c3 must be > 0");
    if (bins < 1 || dsmc_runs < 2 || dsmc_particles < 3 || particle_samples < 1)
      throw std::invalid_argument("convergence: bad sample sizes");
  }
};

/// Histogram over a cube grid plus one overflow cell, kept per run so that
/// linear functionals of the estimate get batch standard errors.
struct BinnedRuns {
  std::vector<std::vector<double>> fractions;  ///< per run, cells + 1 entries summing to 1

  std::vector<double> mean() const {
    std::vector<double> m(fractions.front().size(), 0.0);
    for (const auto& f : fractions)
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += f[i];
    for (auto& x : m) x /= static_cast<double>(fractions.size());
    return m;
  }
  /// Variance of the mean of sum_i s_i f_i.
  double var_of_linear(const std::vector<double>& s) const {
    RunningStat r;
    for (const auto& f : fractions) {
      double a = 0;
      for (std::size_t i = 0; i < s.size(); ++i) a += s[i] * f[i];
      r.push(a);
    }
    const double se = r.se();
    return se * se;
  }
};

inline std::vector<double> bin_velocities(const std::vector<Vec>& vs, const ParticleGrid& g) {
  std::vector<double> f(g.cells() + 1, 0.0);
  for (const auto& v : vs) {
    const auto c = g.locate(std::vector<double>(v.begin(), v.end()));
    f[c ? *c : g.cells()] += 1.0;
  }
  for (auto& x : f) x /= static_cast<double>(vs.size());
  return f;
}

struct ConvergencePoint {
  std::size_t N = 0;
  double eps2 = 0, eps3 = 0;
  std::size_t runs = 0, skipped = 0, events = 0;
  double l1 = 0, l1_se = 0;
  std::vector<double> mass;
};

struct ConvergenceResult {
  std::vector<ConvergencePoint> points;
  std::vector<double> reference;
  MatchedRates rates{};
  bool non_increasing = false;  ///< with one combined SE of slack between neighbours
};

inline ParticleGrid convergence_grid(const ConvergenceConfig& c) {
  return ParticleGrid::uniform(c.d, -c.vmax, c.vmax, c.bins);
}

inline BinnedRuns dsmc_reference(const ConvergenceConfig& c, std::uint64_t seed, unsigned threads,
                                 MatchedRates* used = nullptr) {
  const auto rates = limit_rates(c.d, c.c2, c.c3);
  if (used) *used = rates;
  SolverParams sp;
  sp.kappa2 = rates.kappa2;
  sp.kappa3 = rates.kappa3;
  sp.kernel = c.kernel;
  const auto steps = static_cast<std::size_t>(std::llround(c.horizon / c.dsmc_dt));
  sp.dt = c.horizon / static_cast<double>(steps);
  const auto law = two_temperature_law(c.d, c.t_cold, c.t_hot);
  const auto grid = convergence_grid(c);
  BinnedRuns out;
  out.fractions.resize(c.dsmc_runs);
  parallel_shards(
      c.dsmc_runs,
      [&](std::size_t r) {
        Rng rng = make_rng(seed, 1'000'000'000ull + r);
        VelocityEnsemble e;
        e.v.reserve(c.dsmc_particles);
        for (std::size_t i = 0; i < c.dsmc_particles; ++i) e.v.push_back(law(rng));
        for (std::size_t s = 0; s < steps; ++s) dsmc_step(e, sp, rng);
        out.fractions[r] = bin_velocities(e.v, grid);
      },
      threads);
  return out;
}

/// Velocity 1-marginal of the N-particle flow at the horizon from
/// homogeneous random initial data in the unit periodic box.
inline BinnedRuns particle_marginal(const ConvergenceConfig& c, std::size_t N, std::uint64_t seed,
                                    unsigned threads, ConvergencePoint& info) {
  const auto sc = scaled_epsilons(N, c.d, c.c2, c.c3);
  info.N = N;
  info.eps2 = sc.eps2;
  info.eps3 = sc.eps3;
  const std::size_t runs = (c.particle_samples + N - 1) / N;
  FlowParams fp;
  fp.eps2 = sc.eps2;
  fp.eps3 = sc.eps3;
  fp.box = 1.0;
  fp.policy = c.policy;
  fp.validate_regime();
  DensitySpec ds;
  ds.box = 1.0;
  ds.periodic = true;
  ds.velocity = two_temperature_law(c.d, c.t_cold, c.t_hot);
  const auto grid = convergence_grid(c);
  std::vector<std::vector<double>> per(runs);
  std::vector<char> ok(runs, 0);
  std::vector<std::size_t> events(runs, 0);
  parallel_shards(
      runs,
      [&](std::size_t r) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(N) * 10'000'000ull + r);
        auto z = sample_admissible_initial(N, c.d, sc.eps2, sc.eps3, ds, rng);
        Flow f(std::move(z), fp);
        ok[r] = f.advance(c.horizon);
        events[r] = f.stats().events;
        if (ok[r]) per[r] = bin_velocities(f.state().v, grid);
      },
      threads);
  BinnedRuns out;
  for (std::size_t r = 0; r < runs; ++r) {
    info.events += events[r];
    if (ok[r]) out.fractions.push_back(std::move(per[r]));
    else ++info.skipped;
  }
  info.runs = out.fractions.size();
  if (info.runs < 2) throw std::runtime_error("convergence: too few completed particle runs");
  return out;
}

inline ConvergenceResult convergence_experiment(const ConvergenceConfig& c, std::uint64_t seed,
                                                unsigned threads = 0) {
  c.validate();
  ConvergenceResult res;
  const auto ref = dsmc_reference(c, seed, threads, &res.rates);
  res.reference = ref.mean();
  for (auto N : c.Ns) {
    ConvergencePoint pt;
    const auto md = particle_marginal(c, N, seed, threads, pt);
    pt.mass = md.mean();
    std::vector<double> sgn(pt.mass.size());
    for (std::size_t i = 0; i < sgn.size(); ++i) {
      const double diff = pt.mass[i] - res.reference[i];
      pt.l1 += std::abs(diff);
      sgn[i] = diff >= 0 ? 1.0 : -1.0;
    }
    pt.l1_se = std::sqrt(md.var_of_linear(sgn) + ref.var_of_linear(sgn));
    res.points.push_back(std::move(pt));
  }
  res.non_increasing = true;
  for (std::size_t i = 1; i < res.points.size(); ++i) {
    const auto& a = res.points[i - 1];
    const auto& b = res.points[i];
    if (b.l1 > a.l1 + std::hypot(a.l1_se, b.l1_se)) res.non_increasing = false;
  }
  return res;
}

}  // namespace tk
