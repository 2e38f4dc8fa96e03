#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "ternkin/pseudotraj.hpp"

using namespace tk;

namespace {

Configuration random_config(std::size_t s, std::size_t d, Rng& rng) {
  std::vector<Vec> x, v;
  for (std::size_t i = 0; i < s; ++i) {
    x.push_back(sample_ball(d, 1.0, rng));
    v.push_back(sample_ball(d, 2.0, rng));
  }
  return {x, v};
}

CollisionSequence single(int sigma, int j) {
  CollisionSequence s;
  s.s = 1;
  s.sigma = {sigma};
  s.jumps = {j};
  s.parent = {0};
  return s;
}

}  // namespace

TEST(Sequence, SigmaTildeBoundsAndParents) {
  Rng rng = make_rng(1);
  for (int n = 0; n < 2000; ++n) {
    const std::size_t k = 1 + n % 6, s = 1 + n % 3;
    const auto smp = sample_sequence(s, k, 0.01, 1.0, 2.0, 2, rng);
    smp.seq.validate();
    const auto st = smp.seq.sigma_tilde();
    EXPECT_GE(st[k], k);
    EXPECT_LE(st[k], 2 * k);
    for (std::size_t i = 0; i < k; ++i) EXPECT_LT(smp.seq.parent[i], s + st[i]);
    if (k == 1) {
      EXPECT_TRUE(st[1] == 1 || st[1] == 2);
    }
  }
}

TEST(Sequence, TimesAreDeltaSeparated) {
  Rng rng = make_rng(2);
  const double delta = 0.05, t = 1.0;
  for (int n = 0; n < 10000; ++n) {
    const std::size_t k = 1 + n % 6;
    const auto smp = sample_sequence(2, k, delta, t, 1.0, 2, rng);
    double prev = t;
    for (double ti : smp.data.times) {
      EXPECT_LE(ti, prev - delta + 1e-15);
      prev = ti;
    }
    EXPECT_GE(prev, delta - 1e-15);
  }
  EXPECT_THROW(sample_sequence(1, 4, 0.25, 1.0, 1.0, 2, rng), std::invalid_argument);
  EXPECT_NO_THROW(sample_sequence(1, 4, 0.19, 1.0, 1.0, 2, rng));
}

TEST(Sequence, UniformOverS2) {
  Rng rng = make_rng(3);
  std::map<std::pair<int, int>, std::size_t> hits;
  const std::size_t n = 40000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto smp = sample_sequence(1, 2, 0.0, 1.0, 1.0, 2, rng);
    ++hits[{smp.seq.sigma[0], smp.seq.sigma[1]}];
  }
  ASSERT_EQ(hits.size(), 4u);
  const double se = std::sqrt(0.25 * 0.75 / n);
  for (const auto& [key, c] : hits) EXPECT_LT(std::abs(c / double(n) - 0.25), 3 * se);
}

TEST(Sequence, VelocitiesInBallAndPostCollisionalImpacts) {
  Rng rng = make_rng(4);
  for (int n = 0; n < 2000; ++n) {
    const auto zs = random_config(2, 2, rng);
    const auto smp = sample_sequence(2, 4, 0.01, 1.0, 1.5, 2, rng, &zs);
    for (const auto& vs : smp.data.v)
      for (const auto& v : vs) EXPECT_LE(norm(v), 1.5);
    // Replay along the Boltzmann trajectory: every j = +1 impact has b > 0.
    const auto pt = boltzmann_pseudo(zs, smp.seq, smp.data);
    for (std::size_t i = 0; i < smp.seq.k(); ++i) {
      if (smp.seq.jumps[i] != 1) continue;
      const Vec vm = pt.states[i + 1].v[smp.seq.parent[i]];
      const auto& w = smp.data.omega[i];
      const double b = smp.seq.sigma[i] == 1
                           ? b2(w, smp.data.v[i][0] - vm)
                           : b3(w.head(2), w.tail(2), smp.data.v[i][0] - vm, smp.data.v[i][1] - vm);
      EXPECT_GT(b, 0);
    }
  }
}

TEST(Sequence, Validation) {
  CollisionSequence s = single(1, 1);
  s.parent = {1};
  EXPECT_THROW(s.validate(), std::out_of_range);
  s = single(3, 1);
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = single(1, 0);
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Boltzmann, BinaryPrecollisionalPlacement) {
  const Configuration zs({Vec{0.3, -0.2}}, {Vec{1.0, 0.5}});
  const auto seq = single(1, -1);
  AdjunctionData data;
  data.t = 1.0;
  data.times = {0.4};
  data.omega = {Vec{0.6, 0.8}};
  data.v = {{Vec{-0.7, 0.1}}};
  const auto pt = boltzmann_pseudo(zs, seq, data);
  ASSERT_EQ(pt.states.size(), 3u);
  const Vec x1{0.3 - 0.6 * 1.0, -0.2 - 0.6 * 0.5};
  EXPECT_LT(norm(pt.states[1].x[0] - x1), 1e-15);
  const auto& last = pt.states[2];
  ASSERT_EQ(last.m(), 2u);
  // Adjoined at x_1(t_1^+) with its sampled velocity, then streamed for t_1.
  EXPECT_LT(norm(last.x[1] - (x1 - 0.4 * Vec{-0.7, 0.1})), 1e-15);
  EXPECT_EQ(last.v[1], (Vec{-0.7, 0.1}));
  EXPECT_EQ(last.v[0], zs.v[0]);
}

TEST(Boltzmann, NonAdjoinedVelocitiesUnchangedAndEnergyBalance) {
  Rng rng = make_rng(5);
  for (int n = 0; n < 3000; ++n) {
    const auto zs = random_config(3, 2, rng);
    const auto smp = sample_sequence(3, 5, 0.01, 1.0, 2.0, 2, rng, &zs);
    const auto pt = boltzmann_pseudo(zs, smp.seq, smp.data);
    for (std::size_t i = 0; i < smp.seq.k(); ++i) {
      const auto& before = pt.states[i + 1];
      const auto& after = pt.states[i + 2];
      ASSERT_EQ(after.m(), before.m() + smp.seq.sigma[i]);
      double e0 = 0, e1 = 0;
      for (std::size_t l = 0; l < before.m(); ++l) {
        if (l != smp.seq.parent[i]) {
          EXPECT_EQ(after.v[l], before.v[l]);
        }
        e0 += norm2(before.v[l]);
      }
      for (const auto& v : smp.data.v[i]) e0 += norm2(v);
      for (const auto& v : after.v) e1 += norm2(v);
      EXPECT_NEAR(e1, e0, 1e-12 * (1 + e0));
      if (smp.seq.jumps[i] == -1) {
        EXPECT_EQ(after.v[smp.seq.parent[i]], before.v[smp.seq.parent[i]]);
      }
    }
  }
}

TEST(Bbgky, ZeroOffsetsReproduceBoltzmann) {
  Rng rng = make_rng(6);
  for (int n = 0; n < 500; ++n) {
    const auto zs = random_config(2, 3, rng);
    const auto smp = sample_sequence(2, 4, 0.01, 1.0, 1.0, 3, rng, &zs);
    const auto a = boltzmann_pseudo(zs, smp.seq, smp.data);
    const auto b = bbgky_pseudo(zs, smp.seq, smp.data, 0.0, 0.0);
    ASSERT_EQ(a.states.size(), b.states.size());
    for (std::size_t i = 0; i < a.states.size(); ++i)
      for (std::size_t l = 0; l < a.states[i].m(); ++l) {
        EXPECT_EQ(a.states[i].x[l], b.states[i].x[l]);
        EXPECT_EQ(a.states[i].v[l], b.states[i].v[l]);
      }
  }
  const Configuration zs({Vec{0, 0}}, {Vec{0, 0}});
  EXPECT_THROW(bbgky_pseudo(zs, single(1, 1), {}, 0.2, 0.1), std::invalid_argument);
}

TEST(Bbgky, AdjunctionOffsets) {
  const double e2 = 0.01, e3 = 0.05;
  const Configuration zs({Vec{0.1, 0.2}}, {Vec{0.5, -0.5}});
  AdjunctionData data;
  data.t = 1.0;
  data.times = {0.5};
  for (int j : {-1, 1}) {
    data.omega = {Vec{0.0, 1.0}};
    data.v = {{Vec{0.3, 0.9}}};
    const auto pt = bbgky_pseudo(zs, single(1, j), data, e2, e3);
    // Distance at the adjunction time: undo the final free flight.
    const auto& z = pt.states.back();
    const Vec xm = z.x[0] + 0.5 * z.v[0], xn = z.x[1] + 0.5 * z.v[1];
    EXPECT_NEAR(norm(xn - xm), e2, 1e-15);
    EXPECT_LT(norm((xn - xm) - (j * e2) * Vec{0.0, 1.0}), 1e-15);

    const double c = 1 / std::sqrt(2.0);
    data.omega = {Vec{0.5, 0.5, c * 0.3, -c * 0.8 * std::sqrt(0.5 / 0.365)}};
    data.omega[0] /= norm(data.omega[0]);
    data.v = {{Vec{0.3, 0.9}, Vec{-1.0, 0.2}}};
    const auto pt3 = bbgky_pseudo(zs, single(2, j), data, e2, e3);
    const auto& y = pt3.states.back();
    Vec p[3];
    for (int l = 0; l < 3; ++l) p[l] = y.x[l] + 0.5 * y.v[l];
    EXPECT_NEAR(d3(p[0], p[1], p[2]), std::sqrt(2.0) * e3, 1e-14);
    EXPECT_LT(norm((p[1] - p[0]) - (j * std::sqrt(2.0) * e3) * data.omega[0].head(2)), 1e-15);
  }
}

TEST(Proximity, FirstStepGapIsZero) {
  Rng rng = make_rng(7);
  const auto zs = random_config(3, 2, rng);
  const auto smp = sample_sequence(3, 3, 0.01, 1.0, 1.0, 2, rng, &zs);
  const auto rep = proximity_check(zs, smp.seq, smp.data, 0.001, 0.01);
  EXPECT_EQ(rep.max_gap[0], 0.0);
  EXPECT_TRUE(rep.holds);
}

TEST(Proximity, RandomSequencesSatisfyBound) {
  Rng rng = make_rng(8);
  const double e2 = 1e-3, e3 = 1e-2;
  std::size_t checked = 0;
  double worst_ratio = 0;
  for (int n = 0; n < 10000; ++n) {
    const std::size_t k = 1 + n % 6, s = 1 + (n / 6) % 3;
    const auto zs = random_config(s, 2, rng);
    const auto smp = sample_sequence(s, k, 0.01, 1.0, 3.0, 2, rng, &zs);
    const auto rep = proximity_check(zs, smp.seq, smp.data, e2, e3);
    ASSERT_TRUE(rep.holds) << "sequence " << n;
    EXPECT_EQ(rep.max_velocity_gap, 0.0);
    for (std::size_t i = 1; i < rep.max_gap.size(); ++i) {
      worst_ratio = std::max(worst_ratio, rep.max_gap[i] / rep.bound[i]);
      ++checked;
    }
  }
  EXPECT_GT(checked, 30000u);
  EXPECT_LE(worst_ratio, 1.0);
  EXPECT_GT(worst_ratio, 0.5);
}
