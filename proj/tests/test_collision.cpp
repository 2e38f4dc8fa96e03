#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "ternkin/collision.hpp"
#include "ternkin/stats.hpp"

using namespace tk;

namespace {

double det3(const std::vector<std::vector<double>>& a) {
  if (a.size() == 2) return a[0][0] * a[1][1] - a[0][1] * a[1][0];
  return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
         a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(BinaryTransform, HeadOnExchange) {
  auto [a, b] = binary_transform(Vec{1, 0}, Vec{1, 0}, Vec{-1, 0});
  EXPECT_EQ(a, (Vec{-1, 0}));
  EXPECT_EQ(b, (Vec{1, 0}));
}

TEST(BinaryTransform, GrazingIsIdentity) {
  const Vec v1{0.5, 1.0}, v2{0.5, -2.0};
  auto [a, b] = binary_transform(Vec{1, 0}, v1, v2);
  EXPECT_EQ(a, v1);
  EXPECT_EQ(b, v2);
}

TEST(BinaryTransform, RejectsNonUnitDirection) {
  EXPECT_THROW(binary_transform(Vec{1, 1}, Vec{0, 0}, Vec{1, 0}), std::invalid_argument);
}

TEST(BinaryTransform, ConservationInvolutionReversibility) {
  Rng rng = make_rng(21);
  for (std::size_t d : {2u, 3u}) {
    for (int n = 0; n < 100000; ++n) {
      const Vec w = sample_sphere(d, 1.0, rng);
      const Vec v1 = gaussian_vec(d, rng, 2.0), v2 = gaussian_vec(d, rng, 2.0);
      auto [a, b] = binary_transform(w, v1, v2);
      const Vec p0 = v1 + v2, p1 = a + b;
      for (std::size_t k = 0; k < d; ++k) ASSERT_NEAR(p1[k], p0[k], 1e-12 * (1 + norm(p0)));
      const double e0 = norm2(v1) + norm2(v2), e1 = norm2(a) + norm2(b);
      ASSERT_NEAR(e1, e0, 1e-12 * e0);
      ASSERT_NEAR(d2(a, b), d2(v1, v2), 1e-12 * (1 + d2(v1, v2)));
      ASSERT_NEAR(b2(w, b - a), -b2(w, v2 - v1), 1e-12 * (1 + norm(v2 - v1)));
      auto [c, e] = binary_transform(w, a, b);
      ASSERT_LT(d2(c, v1), 1e-12 * (1 + norm(v1)));
      ASSERT_LT(d2(e, v2), 1e-12 * (1 + norm(v2)));
    }
  }
}

TEST(TernaryTransform, HandFixture) {
  const double s = 1.0 / std::sqrt(2.0);
  auto out = ternary_transform(Vec{s, 0}, Vec{0, s}, Vec{0, 0}, Vec{1, 0}, Vec{0, 1});
  EXPECT_NEAR(out.c, std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(out.v1[0], 1.0, 1e-15);
  EXPECT_NEAR(out.v1[1], 1.0, 1e-15);
  EXPECT_NEAR(norm(out.v2), 0.0, 1e-15);
  EXPECT_NEAR(norm(out.v3), 0.0, 1e-15);
}

TEST(TernaryTransform, EqualVelocitiesAreFixed) {
  Rng rng = make_rng(22);
  const Vec w = sample_sphere(4, 1.0, rng);
  const Vec v{0.3, -1.2};
  auto out = ternary_transform(w.head(2), w.tail(2), v, v, v);
  EXPECT_EQ(out.v1, v);
  EXPECT_EQ(out.v2, v);
  EXPECT_EQ(out.v3, v);
}

TEST(TernaryTransform, RejectsInvalidImpact) {
  EXPECT_THROW(ternary_transform(Vec{1, 0}, Vec{0, 1}, Vec{0, 0}, Vec{0, 0}, Vec{0, 0}),
               std::invalid_argument);
}

TEST(TernaryTransform, QuotientBound) {
  Rng rng = make_rng(23);
  for (int n = 0; n < 100000; ++n) {
    const Vec w = sample_sphere(6, 1.0, rng);
    const double q = 1.0 / (1.0 + dot(w.head(3), w.tail(3)));
    ASSERT_GE(q, 2.0 / 3.0 - 1e-12);
    ASSERT_LE(q, 2.0 + 1e-12);
  }
}

TEST(TernaryTransform, ConservationInvolutionReversibility) {
  Rng rng = make_rng(24);
  for (std::size_t d : {2u, 3u}) {
    for (int n = 0; n < 100000; ++n) {
      const Vec w = sample_sphere(2 * d, 1.0, rng);
      const Vec w1 = w.head(d), w2 = w.tail(d);
      const Vec v1 = gaussian_vec(d, rng, 2.0), v2 = gaussian_vec(d, rng, 2.0),
                v3 = gaussian_vec(d, rng, 2.0);
      auto o = ternary_transform(w1, w2, v1, v2, v3);
      const Vec p0 = v1 + v2 + v3, p1 = o.v1 + o.v2 + o.v3;
      for (std::size_t k = 0; k < d; ++k) ASSERT_NEAR(p1[k], p0[k], 1e-12 * (1 + norm(p0)));
      const double e0 = norm2(v1) + norm2(v2) + norm2(v3);
      ASSERT_NEAR(norm2(o.v1) + norm2(o.v2) + norm2(o.v3), e0, 1e-12 * e0);
      const double r0 = norm2(v1 - v2) + norm2(v1 - v3) + norm2(v2 - v3);
      const double r1 = norm2(o.v1 - o.v2) + norm2(o.v1 - o.v3) + norm2(o.v2 - o.v3);
      ASSERT_NEAR(r1, r0, 1e-12 * r0);
      const double s0 = b3(w1, w2, v2 - v1, v3 - v1);
      const double s1 = b3(w1, w2, o.v2 - o.v1, o.v3 - o.v1);
      ASSERT_NEAR(s1, -s0, 1e-12 * (1 + std::abs(s0)));
      auto back = ternary_transform(w1, w2, o.v1, o.v2, o.v3);
      ASSERT_LT(d2(back.v1, v1), 1e-12 * (1 + norm(v1)));
      ASSERT_LT(d2(back.v2, v2), 1e-12 * (1 + norm(v2)));
      ASSERT_LT(d2(back.v3, v3), 1e-12 * (1 + norm(v3)));
    }
  }
}

TEST(TernaryTransform, VelocityMapHasUnitDeterminant) {
  // finite-difference Jacobian of (v1,v2,v3) -> T(v1,v2,v3) in d = 2 (6x6)
  Rng rng = make_rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec w = sample_sphere(4, 1.0, rng);
    const Vec w1 = w.head(2), w2 = w.tail(2);
    Vec z = gaussian_vec(6, rng);
    auto map = [&](const Vec& u) {
      auto o = ternary_transform(w1, w2, Vec{u[0], u[1]}, Vec{u[2], u[3]}, Vec{u[4], u[5]});
      return Vec{o.v1[0], o.v1[1], o.v2[0], o.v2[1], o.v3[0], o.v3[1]};
    };
    std::vector<std::vector<double>> jm(6, std::vector<double>(6));
    const double h = 1e-6;
    for (int c = 0; c < 6; ++c) {
      Vec zp = z, zm = z;
      zp[c] += h;
      zm[c] -= h;
      const Vec fp = map(zp), fm = map(zm);
      for (int r = 0; r < 6; ++r) jm[r][c] = (fp[r] - fm[r]) / (2 * h);
    }
    // Gaussian elimination determinant
    double det = 1;
    for (int c = 0; c < 6; ++c) {
      int p = c;
      for (int r = c + 1; r < 6; ++r)
        if (std::abs(jm[r][c]) > std::abs(jm[p][c])) p = r;
      if (p != c) {
        std::swap(jm[p], jm[c]);
        det = -det;
      }
      det *= jm[c][c];
      for (int r = c + 1; r < 6; ++r) {
        const double f = jm[r][c] / jm[c][c];
        for (int k = c; k < 6; ++k) jm[r][k] -= f * jm[c][k];
      }
    }
    EXPECT_NEAR(std::abs(det), 1.0, 1e-6);
  }
}

TEST(Classification, BinaryCases) {
  EXPECT_EQ(classify_binary(Vec{1, 0}, Vec{1, 0}, Vec{0, 0}).tag, Collision::Precollisional);
  EXPECT_EQ(classify_binary(Vec{1, 0}, Vec{0, 0}, Vec{1, 0}).tag, Collision::Postcollisional);
  EXPECT_EQ(classify_binary(Vec{1, 0}, Vec{0, 0}, Vec{0, 1}).tag, Collision::Grazing);
}

TEST(Classification, ToleranceBand) {
  EXPECT_EQ(classify_binary(Vec{1, 0}, Vec{0, 0}, Vec{1e-13, 1}).tag, Collision::Grazing);
  EXPECT_EQ(classify_binary(Vec{1, 0}, Vec{0, 0}, Vec{1e-9, 1}).tag, Collision::Postcollisional);
}

TEST(Classification, PreMapsToPostUnderTransform) {
  Rng rng = make_rng(26);
  for (int n = 0; n < 20000; ++n) {
    const Vec w = sample_sphere(2, 1.0, rng);
    const Vec vi = gaussian_vec(2, rng), vj = gaussian_vec(2, rng);
    const auto c0 = classify_binary(w, vi, vj).tag;
    auto [a, b] = binary_transform(w, vi, vj);
    const auto c1 = classify_binary(w, a, b).tag;
    EXPECT_EQ(c0 == Collision::Precollisional, c1 == Collision::Postcollisional);
    const Vec t = sample_sphere(4, 1.0, rng);
    const Vec vk = gaussian_vec(2, rng);
    const auto k0 = classify_ternary(t.head(2), t.tail(2), vi, vj, vk).tag;
    auto o = ternary_transform(t.head(2), t.tail(2), vi, vj, vk);
    const auto k1 = classify_ternary(t.head(2), t.tail(2), o.v1, o.v2, o.v3).tag;
    EXPECT_EQ(k0 == Collision::Precollisional, k1 == Collision::Postcollisional);
  }
}

TEST(TransitionMap, HandFixture) {
  auto r = transition_map(Vec{0, 0}, Vec{1, 0}, Vec{1, 0});
  EXPECT_NEAR(norm(r.nu1), 1.0, 1e-15);
  EXPECT_NEAR(r.nu1[0], 1.0, 1e-15);
  EXPECT_NEAR(r.jac, 8.0, 1e-14);
}

TEST(TransitionMap, Errors) {
  EXPECT_THROW(transition_map(Vec{1, 0}, Vec{1, 0}, Vec{1, 0}), std::invalid_argument);
  EXPECT_THROW(transition_map(Vec{0, 0}, Vec{1, 0}, Vec{-1, 0}), std::invalid_argument);
}

TEST(TransitionMap, JacobianMatchesFiniteDifferences) {
  Rng rng = make_rng(27);
  int checked = 0;
  for (std::size_t d : {2u, 3u}) {
    while (checked < 5000 * static_cast<int>(d - 1)) {
      const Vec v1 = gaussian_vec(d, rng), v2 = gaussian_vec(d, rng);
      const Vec w = sample_sphere(d, 1.0, rng);
      if (b2(w, v2 - v1) < 1e-3 * norm(v2 - v1)) continue;
      const auto res = transition_map(v1, v2, w);
      std::vector<std::vector<double>> jm(d, std::vector<double>(d));
      const double h = 1e-5;
      for (std::size_t c = 0; c < d; ++c) {
        Vec wp = w, wm = w;
        wp[c] += h;
        wm[c] -= h;
        const Vec fp = transition_map_extended(v1, v2, wp), fm = transition_map_extended(v1, v2, wm);
        for (std::size_t r = 0; r < d; ++r) jm[r][c] = (fp[r] - fm[r]) / (2 * h);
      }
      EXPECT_LT(rel_err(det3(jm), res.jac), 1e-6);
      ++checked;
    }
  }
}

TEST(TransitionMap, ChangeOfVariablesIdentity) {
  // int_{S+} g(J(w)) sj(w) dw = int_S g(nu) dnu for polynomial g
  const std::vector<std::function<double(const Vec&)>> gs = {
      [](const Vec& n) { return n[0] * n[0]; },
      [](const Vec& n) { return 1.0 + n[0] * n[1]; },
      [](const Vec& n) { return std::pow(n[0], 4) + n[1]; },
  };
  // sphere integrals of the three polynomials: d = 2 by angular quadrature
  auto quad2 = [](const std::function<double(const Vec&)>& g) {
    const int k = 4096;
    double s = 0;
    for (int i = 0; i < k; ++i) {
      const double th = 2 * M_PI * (i + 0.5) / k;
      s += g(Vec{std::cos(th), std::sin(th)});
    }
    return s * 2 * M_PI / k;
  };
  Rng rng = make_rng(28);
  const Vec v1{0.3, -0.4}, v2{-1.1, 0.9};
  for (const auto& g : gs) {
    RunningStat st;
    for (int n = 0; n < 400000; ++n) {
      const Vec w = sample_sphere(2, 1.0, rng);
      double val = 0;
      if (b2(w, v2 - v1) > 0) {
        const auto r = transition_map(v1, v2, w);
        val = g(r.nu1) * r.surface_jac;
      }
      st.push(2 * M_PI * val);
    }
    EXPECT_NEAR(st.mean, quad2(g), 3 * st.se());
  }
}
