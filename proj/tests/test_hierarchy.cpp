#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <cmath>

#include "ternkin/hierarchy.hpp"

using namespace tk;

TEST(Scaling, HandValues) {
  const auto s = scaled_epsilons(1000, 2);
  EXPECT_NEAR(s.eps2, 1e-3, 1e-15);
  EXPECT_NEAR(s.eps3, 1e-2, 1e-15);
  EXPECT_THROW(scaled_epsilons(2, 2), std::invalid_argument);
}

TEST(Scaling, DefiningEqualitiesAndRatioLaw) {
  for (std::size_t d : {2u, 3u}) {
    for (std::size_t N : {3u, 10u, 64u, 1000u, 123457u}) {
      for (double c : {1.0, 0.5, 3.0}) {
        const auto s = scaled_epsilons(N, d, c, 2 * c);
        const double dd = static_cast<double>(d);
        EXPECT_NEAR(N * std::pow(s.eps2, dd - 1), c, 1e-12 * c);
        EXPECT_NEAR(N * std::pow(s.eps3, dd - 0.5), 2 * c, 1e-12 * 2 * c);
      }
      const auto u = scaled_epsilons(N, d);
      EXPECT_NEAR(u.eps2 / u.eps3, epsilon_ratio_law(N, d), 1e-12 * epsilon_ratio_law(N, d));
    }
  }
  for (std::size_t N = 3; N < 5000; N += 37) {
    const auto s = scaled_epsilons(N, 2);
    EXPECT_NEAR(s.eps2 / s.eps3, std::pow(static_cast<double>(N), -1.0 / 3.0), 1e-14);
    EXPECT_LT(s.eps2, s.eps3);
  }
}

TEST(InitialData, AdmissibleAndSeparated) {
  Rng rng = make_rng(31);
  const auto sc = scaled_epsilons(128, 2);
  DensitySpec spec;
  spec.theta = 0.02;
  for (int rep = 0; rep < 5; ++rep) {
    const auto z = sample_admissible_initial(128, 2, sc.eps2, sc.eps3, spec, rng);
    ASSERT_EQ(z.m(), 128u);
    EXPECT_EQ(in_phase_space(z, sc.eps2, sc.eps3, -1.0, spec.box).kind, PhaseKind::Interior);
    for (std::size_t i = 0; i < z.m(); ++i)
      for (std::size_t j = i + 1; j < z.m(); ++j)
        ASSERT_GT(norm(min_image(z.x[j] - z.x[i], spec.box)), spec.theta);
  }
}

TEST(InitialData, FreeSpaceIsInterior) {
  Rng rng = make_rng(32);
  DensitySpec spec;
  spec.periodic = false;
  const auto z = sample_admissible_initial(40, 3, 0.05, 0.1, spec, rng);
  EXPECT_EQ(in_phase_space(z, 0.05, 0.1).kind, PhaseKind::Interior);
}

TEST(InitialData, VelocitySecondMoment) {
  Rng rng = make_rng(33);
  DensitySpec spec;
  spec.beta = 2.0;
  RunningStat st;
  while (st.n < 100000) {
    const auto z = sample_admissible_initial(100, 2, 0.01, 0.05, spec, rng);
    for (const auto& v : z.v) st.push(norm2(v));
  }
  EXPECT_NEAR(st.mean, 2.0 / spec.beta, 3 * st.se());
}

TEST(InitialData, BudgetExhausted) {
  Rng rng = make_rng(34);
  DensitySpec spec;
  spec.max_attempts = 1000;
  EXPECT_THROW(sample_admissible_initial(400, 2, 0.1, 0.2, spec, rng), std::runtime_error);
}

TEST(Marginal, DeltaEnsemble) {
  Configuration z({Vec{0, 0}}, {Vec{0.5, 0.5}});
  std::vector<Configuration> ens(10, z);
  const auto h = marginal_estimate(ens, 1, ParticleGrid::uniform(2, 0, 1, 1));
  ASSERT_EQ(h.cells(), 1u);
  EXPECT_DOUBLE_EQ(h.mass()[0], 1.0);
  EXPECT_THROW(marginal_estimate({}, 1, ParticleGrid::uniform(2, 0, 1, 1)), std::invalid_argument);
}

TEST(Marginal, MaxwellianMatchesGaussianBins) {
  Rng rng = make_rng(35);
  std::vector<Configuration> ens;
  for (int n = 0; n < 10000; ++n) ens.push_back(Configuration({Vec{0, 0}}, {gaussian_vec(2, rng)}));
  const auto grid = ParticleGrid::uniform(2, -4.5, 4.5, 6);
  const auto h = marginal_estimate(ens, 1, grid);
  // exact Gaussian bin masses from the normal CDF
  auto Phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  const double tot = std::pow(Phi(4.5) - Phi(-4.5), 2);
  double l1 = 0, mass = 0;
  const auto m = h.mass();
  for (std::size_t id = 0; id < h.cells(); ++id) {
    const auto c = grid.center(id);
    const double w = 0.75;
    const double p = (Phi(c[0] + w) - Phi(c[0] - w)) * (Phi(c[1] + w) - Phi(c[1] - w)) / tot;
    l1 += std::abs(m[id] - p);
    mass += m[id];
  }
  EXPECT_NEAR(mass, 1.0, 1e-9);
  EXPECT_LT(l1, 0.05);
}

TEST(Marginal, TwoParticleReducesToOne) {
  Rng rng = make_rng(36);
  std::vector<Configuration> ens;
  DensitySpec spec;
  for (int n = 0; n < 300; ++n) ens.push_back(sample_admissible_initial(5, 2, 0.01, 0.05, spec, rng));
  const auto grid = ParticleGrid::uniform(2, -6, 6, 6);
  const auto h2 = marginal_estimate(ens, 2, grid);
  const auto h1 = marginal_estimate(ens, 1, grid);
  const auto r = h2.reduce();
  const auto a = r.mass(), b = h1.mass();
  double l1 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a[i] - b[i]);
  EXPECT_LT(l1, 1e-9);
}

TEST(Marginal, PermutationInvariance) {
  Rng rng = make_rng(37);
  std::vector<Configuration> ens, perm;
  DensitySpec spec;
  for (int n = 0; n < 200; ++n) {
    auto z = sample_admissible_initial(6, 2, 0.01, 0.05, spec, rng);
    ens.push_back(z);
    std::vector<std::size_t> idx(z.m());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Configuration p;
    for (auto i : idx) {
      p.x.push_back(z.x[i]);
      p.v.push_back(z.v[i]);
    }
    perm.push_back(p);
  }
  const auto grid = ParticleGrid::uniform(2, -4, 4, 8);
  for (std::size_t s : {1u, 2u}) {
    const auto a = marginal_estimate(ens, s, grid), b = marginal_estimate(perm, s, grid);
    EXPECT_EQ(a.counts, b.counts);
  }
}

TEST(Marginal, PositionVelocityGrid) {
  Rng rng = make_rng(38);
  std::vector<Configuration> ens;
  DensitySpec spec;
  for (int n = 0; n < 2000; ++n) ens.push_back(sample_admissible_initial(4, 2, 0.01, 0.05, spec, rng));
  ParticleGrid g{{0, 0, -5, -5}, {1, 1, 5, 5}, {2, 2, 10, 10}};
  const auto h = marginal_estimate(ens, 1, g, MarginalMode::PositionVelocity);
  double tot = 0;
  for (double m : h.mass()) tot += m;
  EXPECT_NEAR(tot, 1.0, 1e-9);
  // uniform positions: the spatial density of phi = 1 is about 1 everywhere
  const double rho = observable(h, [](const std::vector<double>&) { return 1.0; }, std::nullopt,
                                {0.25, 0.75});
  EXPECT_NEAR(rho, 1.0, 0.1);
}

TEST(Observable, NormalizationSymmetryAndEnsembleAverage) {
  Rng rng = make_rng(39);
  std::vector<Configuration> ens;
  RunningStat direct;
  auto phi = [](const std::vector<double>& v) { return std::cos(v[0]) * std::exp(-v[1] * v[1]); };
  for (int n = 0; n < 50000; ++n) {
    Vec v = gaussian_vec(2, rng);
    ens.push_back(Configuration({Vec{0, 0}}, {v}));
    direct.push(phi({v[0], v[1]}));
  }
  const auto grid = ParticleGrid::uniform(2, -6, 6, 120);
  const auto h = marginal_estimate(ens, 1, grid);
  EXPECT_NEAR(observable(h, [](const std::vector<double>&) { return 1.0; }), 1.0, 1e-12);
  const double mean_vx = observable(h, [](const std::vector<double>& v) { return v[0]; });
  EXPECT_NEAR(mean_vx, 0.0, 3.0 / std::sqrt(50000.0));
  const double q = observable(h, phi, Box{{-6, -6}, {6, 6}});
  // binning error of the midpoint rule is O(h^2) = O(1e-2)
  EXPECT_NEAR(q, direct.mean, 3 * direct.se() + 2e-3);
  EXPECT_THROW(observable(h, phi, Box{{-7, -6}, {6, 6}}), std::invalid_argument);
}

TEST(Bbgky, Prefactors) {
  EXPECT_DOUBLE_EQ(bbgky_prefactor(CollisionOrder::Binary, 100, 2, 2, 0.01, 0.1), 0.98);
  EXPECT_NEAR(bbgky_prefactor(CollisionOrder::Ternary, 100, 2, 3, 0.01, 0.1),
              2.0 * 98 * 97 * 1e-5, 1e-12);
  EXPECT_EQ(bbgky_prefactor(CollisionOrder::Binary, 5, 5, 2, 0.1, 0.2), 0.0);
  EXPECT_EQ(bbgky_prefactor(CollisionOrder::Ternary, 5, 4, 2, 0.1, 0.2), 0.0);
  double last2 = 0, last3 = 0;
  for (std::size_t N : {100u, 1000u, 10000u, 100000u, 1000000u}) {
    const auto s = scaled_epsilons(N, 2);
    last2 = bbgky_prefactor(CollisionOrder::Binary, N, 3, 2, s.eps2, s.eps3);
    last3 = bbgky_prefactor(CollisionOrder::Ternary, N, 3, 2, s.eps2, s.eps3);
  }
  EXPECT_NEAR(last2, 1.0, 1e-5);
  EXPECT_NEAR(last3, 1.0, 1e-5);
  EXPECT_EQ(parse_order("ternary"), CollisionOrder::Ternary);
  EXPECT_THROW(parse_order("quaternary"), std::invalid_argument);
}

TEST(Bbgky, ZeroDensity) {
  Rng rng = make_rng(40);
  Configuration zs({Vec{0, 0}, Vec{1, 0}}, {Vec{1, 0}, Vec{0, 1}});
  for (auto o : {CollisionOrder::Binary, CollisionOrder::Ternary}) {
    const auto e = bbgky_collision_estimate([](const Configuration&) { return 0.0; }, zs, o, 50,
                                            0.02, 0.1, 1000, rng);
    EXPECT_EQ(e.value, 0.0);
    EXPECT_EQ(e.gain, 0.0);
  }
}

TEST(Bbgky, MaxwellianEquilibrium) {
  auto maxw = [](const Configuration& z) {
    double e = 0;
    for (const auto& v : z.v) e += norm2(v);
    return std::exp(-0.5 * e) / std::pow(2 * M_PI, static_cast<double>(z.m()));
  };
  Configuration zs({Vec{0, 0}, Vec{0.3, 0.1}}, {Vec{0.4, -0.2}, Vec{-1.0, 0.5}});
  for (auto o : {CollisionOrder::Binary, CollisionOrder::Ternary}) {
    Rng rg = make_rng(41), rl = make_rng(42);
    const auto a = bbgky_collision_estimate(maxw, zs, o, 100, 0.01, 0.05, 200000, rg);
    const auto b = bbgky_collision_estimate(maxw, zs, o, 100, 0.01, 0.05, 200000, rl);
    EXPECT_GT(a.gain, 0.0);
    EXPECT_NEAR(a.gain, b.loss, 3 * std::hypot(a.gain_se, b.loss_se));
    EXPECT_NEAR(a.value, 0.0, 1e-12 * a.gain);
  }
}

TEST(Bbgky, BinaryLossAgainstClosedForm) {
  // loss with f = M(v_i) M(v_new) at one particle: A * int b2+ M dv dw
  // = A * M(v) * int |v_new - v| 2 M(v_new) dv_new in d = 2, checked by quadrature
  auto maxw = [](const Configuration& z) {
    double e = 0;
    for (const auto& v : z.v) e += norm2(v);
    return std::exp(-0.5 * e) / std::pow(2 * M_PI, static_cast<double>(z.m()));
  };
  Configuration zs({Vec{0, 0}}, {Vec{0.7, 0}});
  Rng rng = make_rng(43);
  const auto e = bbgky_collision_estimate(maxw, zs, CollisionOrder::Binary, 11, 0.1, 0.2, 400000, rng);
  double q = 0;
  const int k = 800;
  const double L = 8, h = 2 * L / k;
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) {
      const double x = -L + (a + 0.5) * h, y = -L + (b + 0.5) * h;
      q += 2 * std::hypot(x - 0.7, y) * std::exp(-0.5 * (x * x + y * y)) / (2 * M_PI) * h * h;
    }
  const double expect = 10 * 0.1 * q * std::exp(-0.5 * 0.49) / (2 * M_PI);
  EXPECT_NEAR(e.loss, expect, 3 * e.loss_se);
}

TEST(Lwp, HandValueMonotonicityScaling) {
  EXPECT_NEAR(lwp_time(2, 1.0, 0.0), 0.15429367114742926, 1e-14);
  EXPECT_NEAR(lwp_time(3, 1.0, 0.0), 0.08891444330829676, 1e-14);
  double prev = 0;
  for (double b = 0.05; b < 20; b += 0.05) {
    const double t = lwp_time(2, b, 0.0);
    EXPECT_GT(t, prev);
    prev = t;
  }
  const double half = lwp_time(2, 1.0, 10.0 - std::log(2.0)) / lwp_time(2, 1.0, 10.0);
  EXPECT_NEAR(half, 0.5, 1e-3);
  EXPECT_THROW(lwp_time(2, 0.0, 0.0), std::invalid_argument);
}
