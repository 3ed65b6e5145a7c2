#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <thread>

#include "belab/catalog.hpp"
#include "belab/geodesics.hpp"

using namespace belab;

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::Vector3d stereo_to_sphere(const Point<2>& p) {
  const double r2 = p.x.squaredNorm();
  Eigen::Vector3d u(2 * p.x[0] / (1 + r2), 2 * p.x[1] / (1 + r2), (r2 - 1) / (r2 + 1));
  // the second chart inverts the plane, which flips the height
  if (p.chart == 1) u[2] = -u[2];
  return u;
}

double sphere_oracle(const Point<2>& a, const Point<2>& b) {
  return std::acos(std::clamp(stereo_to_sphere(a).dot(stereo_to_sphere(b)), -1.0, 1.0));
}

template <int N>
Point<N> random_point(const ChartManifold<N>& M, std::mt19937_64& rng) {
  for (;;) {
    const int c = M.chart_count() == 2 ? static_cast<int>(rng() % 2) : 0;
    const auto& ch = M.chart(c);
    Vec<N> x;
    for (int k = 0; k < N; ++k) x[k] = std::uniform_real_distribution<double>(ch.lo[k], ch.hi[k])(rng);
    if (ch.prefers(x)) return Point<N>(x, c);
  }
}

}  // namespace

TEST(Distance, FlatTorusShortestImage) {
  const auto M = catalog::flat_torus<2>();
  DistanceSolver<2> S(M);
  EXPECT_NEAR(S.distance(Point<2>(Vec<2>(0, 0)), Point<2>(Vec<2>(kPi, kPi))), kPi * std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(S.distance(Point<2>(Vec<2>(0.1, 0.1)), Point<2>(Vec<2>(6.2, 6.2))),
              std::sqrt(2.0) * (2 * kPi - 6.1), 1e-9);
  const auto T3 = catalog::flat_torus<3>();
  DistanceSolver<3> S3(T3);
  EXPECT_NEAR(S3.distance(Point<3>(Vec<3>(0.2, 6.0, 3.0)), Point<3>(Vec<3>(6.1, 0.3, 3.5))),
              std::sqrt(std::pow(2 * kPi - 5.9, 2) + std::pow(2 * kPi - 5.7, 2) + 0.25), 1e-9);
}

TEST(Distance, RoundSpherePoleToEquator) {
  const auto M = catalog::round_sphere();
  DistanceSolver<2> S(M);
  EXPECT_NEAR(S.distance(Point<2>(Vec<2>(0, 0)), Point<2>(Vec<2>(1, 0))), kPi / 2, 1e-9);
  EXPECT_NEAR(S.distance(Point<2>(Vec<2>(0, 0), 1), Point<2>(Vec<2>(0, -1))), kPi / 2, 1e-9);
}

TEST(Distance, RoundSphereRandomPairsMatchGreatCircles) {
  const auto M = catalog::round_sphere();
  DistanceSolver<2> S(M);
  std::mt19937_64 rng(11);
  int refined = 0;
  for (int i = 0; i < 40; ++i) {
    const auto a = random_point(M, rng), b = random_point(M, rng);
    const auto r = S.solve(a, b);
    const double d = sphere_oracle(a, b);
    if (d < kPi - 0.05) {
      EXPECT_NEAR(r.length, d, 1e-8) << i;
      refined += r.refined;
    }
    EXPECT_LE(r.length, r.upper_bound + 1e-9);
    EXPECT_LE(r.upper_bound, d * 1.08 + 1e-9);
  }
  EXPECT_GT(refined, 30);
}

TEST(Distance, CylinderUnrolledCover) {
  const auto M = catalog::cylinder(1.0, 20.0);
  DistanceSolver<2> S(M);
  EXPECT_NEAR(S.distance(Point<2>(Vec<2>(0, 0)), Point<2>(Vec<2>(3, kPi))), std::sqrt(9 + kPi * kPi), 1e-9);
  EXPECT_NEAR(S.distance(Point<2>(Vec<2>(-2, 0.5)), Point<2>(Vec<2>(1, 6.0))),
              std::sqrt(9 + std::pow(2 * kPi - 5.5, 2)), 1e-9);
}

TEST(Distance, ProductS1xS2) {
  const double R = 0.7;
  const auto M = catalog::s1xs2(R);
  DistanceSolver<3> S(M);
  std::mt19937_64 rng(12);
  for (int i = 0; i < 10; ++i) {
    const auto a = random_point(M, rng), b = random_point(M, rng);
    const double dpsi = detail::wrap_symmetric(b.x[0] - a.x[0], 2 * kPi);
    const double ds = sphere_oracle(Point<2>(Vec<2>(a.x[1], a.x[2]), a.chart), Point<2>(Vec<2>(b.x[1], b.x[2]), b.chart));
    if (ds > kPi - 0.05) continue;
    EXPECT_NEAR(S.distance(a, b), std::sqrt(R * R * dpsi * dpsi + ds * ds), 1e-8) << i;
  }
}

TEST(Distance, SymmetryAndTriangleInequality) {
  const auto M = catalog::warped_product(0.3, 1.0, 8.0);
  DistanceSolver<2> S(M);
  std::mt19937_64 rng(13);
  auto pick = [&] {
    return Point<2>(Vec<2>(std::uniform_real_distribution<double>(-3, 3)(rng),
                           std::uniform_real_distribution<double>(0, 2 * kPi)(rng)));
  };
  for (int i = 0; i < 12; ++i) {
    const auto a = pick(), b = pick(), c = pick();
    const double ab = S.distance(a, b), ba = S.distance(b, a);
    EXPECT_NEAR(ab, ba, 1e-6);
    EXPECT_LE(S.distance(a, c), ab + S.distance(b, c) + 1e-6);
    const auto r = S.solve(a, b);
    EXPECT_LE(r.length, r.upper_bound);
  }
}

TEST(Distance, ConcurrentQueriesMatchSerial) {
  const auto M = catalog::round_sphere();
  DistanceSolver<2> shared(M), serial(M);
  std::mt19937_64 rng(14);
  std::vector<std::pair<Point<2>, Point<2>>> pairs;
  for (int i = 0; i < 24; ++i) pairs.emplace_back(random_point(M, rng), random_point(M, rng));
  std::vector<double> par(pairs.size());
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (std::size_t i = static_cast<std::size_t>(t); i < pairs.size(); i += 4)
        par[i] = shared.distance(pairs[i].first, pairs[i].second);
      for (std::size_t i = 0; i < pairs.size(); ++i) shared.distance(pairs[i].first, pairs[i].second);
    });
  for (auto& th : threads) th.join();
  for (std::size_t i = 0; i < pairs.size(); ++i)
    EXPECT_EQ(par[i], serial.distance(pairs[i].first, pairs[i].second));
}

TEST(Geodesic, PathInvariants) {
  const auto M = catalog::warped_product(0.3, 1.0, 8.0);
  DistanceSolver<2> S(M);
  const auto g = S.geodesic(Point<2>(Vec<2>(-1.0, 0.3)), Point<2>(Vec<2>(2.0, 2.5)), 101);
  EXPECT_TRUE(g.unit_speed);
  EXPECT_LT(g.endpoint_residual, 1e-6);
  std::vector<double> chords;
  for (std::size_t i = 1; i < g.points.size(); ++i) {
    const Vec<2> d = g.points[i].x - g.points[i - 1].x;
    const Vec<2> mid = 0.5 * (g.points[i].x + g.points[i - 1].x);
    chords.push_back(std::sqrt(d.dot(M.metric(Point<2>(mid)) * d)));
  }
  const auto [lo, hi] = std::minmax_element(chords.begin(), chords.end());
  EXPECT_LT(*hi / *lo - 1.0, 0.01);
  const double h = g.t[1] - g.t[0];
  for (std::size_t i = 1; i + 1 < g.points.size(); ++i) {
    const Vec<2> acc = (g.points[i + 1].x - 2 * g.points[i].x + g.points[i - 1].x) / (h * h);
    const auto C = christoffel(M, g.points[i]);
    const Vec<2> v = g.velocities[i];
    const Vec<2> res(acc[0] + v.dot(C.G[0] * v), acc[1] + v.dot(C.G[1] * v));
    EXPECT_LT(res.norm(), 1e-4);
  }
}

TEST(LineIntegral, Examples) {
  const auto Z = catalog::flat_torus<2>();
  const auto p0 = geodesic_path(Z, Point<2>(Vec<2>(1, 1)), Vec<2>(0.6, 0.8), 2.0, 21);
  EXPECT_EQ(line_integral_X(Z, p0), 0.0);
  const Vec<2> X(0.3, -0.5);
  const auto C = catalog::flat_torus<2>(CovectorField<2>::constant(X));
  const Vec<2> u(std::cos(0.7), std::sin(0.7));
  const auto p1 = geodesic_path(C, Point<2>(Vec<2>(1, 1)), u, 2.5, 31);
  EXPECT_NEAR(line_integral_X(C, p1), 2.5 * X.dot(u), 1e-12);
  // closed theta-loop of X = dtheta
  const auto D = catalog::flat_torus<2>(CovectorField<2>::constant(Vec<2>(0, 1)));
  const auto loop = geodesic_path(D, Point<2>(Vec<2>(1, 0)), Vec<2>(0, 1), 2 * kPi, 65);
  EXPECT_NEAR(line_integral_X(D, loop), 2 * kPi, 1e-12);
}

TEST(Excess, CylinderValues) {
  const auto M = catalog::cylinder(1.0, 20.0);
  DistanceSolver<2> S(M);
  const auto T = TriangleConfig<2>::make(S, Point<2>(Vec<2>(0, 0)), Point<2>(Vec<2>(10, 0)),
                                         Point<2>(Vec<2>(-10, 0)), 9.0, 1e-6);
  EXPECT_NEAR(excess(S, T, Point<2>(Vec<2>(0, 0))), 0.0, 1e-9);
  EXPECT_NEAR(excess(S, T, Point<2>(Vec<2>(0, kPi))), 2 * std::sqrt(100 + kPi * kPi) - 20, 1e-8);
  EXPECT_NEAR(excess(S, T, T.q_plus), 0.0, 1e-9);
  EXPECT_NEAR(busemann_standin(S, T, +1, T.p), 0.0, 1e-12);
  EXPECT_NEAR(busemann_standin(S, T, +1, Point<2>(Vec<2>(1, 0))), -1.0, 1e-9);
  std::mt19937_64 rng(15);
  for (int i = 0; i < 100; ++i) {
    const Point<2> x(Vec<2>(std::uniform_real_distribution<double>(-5, 5)(rng),
                            std::uniform_real_distribution<double>(0, 2 * kPi)(rng)));
    const double E = excess(S, T, x);
    EXPECT_GE(E, -1e-6);
    EXPECT_NEAR(busemann_standin(S, T, +1, x) + busemann_standin(S, T, -1, x), E - T.excess_at_p(), 1e-9);
  }
}

TEST(Excess, TriangleValidation) {
  const auto M = catalog::cylinder(1.0, 20.0);
  DistanceSolver<2> S(M);
  EXPECT_THROW(TriangleConfig<2>::make(S, Point<2>(Vec<2>(0, 0)), Point<2>(Vec<2>(5, 0)),
                                       Point<2>(Vec<2>(-5, 0)), 6.0, 0.1),
               HypothesisViolation);
  EXPECT_THROW(TriangleConfig<2>::make(S, Point<2>(Vec<2>(0, 1)), Point<2>(Vec<2>(5, 0)),
                                       Point<2>(Vec<2>(-5, 0)), 4.0, 0.01),
               HypothesisViolation);
}

TEST(Radial, FlatTorusConeData) {
  const auto M = catalog::flat_torus<2>();
  DistanceSolver<2> S(M);
  const Vec<2> dir(std::cos(0.3), std::sin(0.3));
  const auto R = radial_polar_data(S, Point<2>(Vec<2>(1, 2)), dir, 2.5, 50);
  ASSERT_EQ(R.samples.size(), 50u);
  for (const auto& s : R.samples) {
    EXPECT_NEAR(s.H, 1.0 / s.rho, 1e-9);
    EXPECT_NEAR(s.area, s.rho, 1e-9);
  }
  const auto T3 = catalog::flat_torus<3>();
  DistanceSolver<3> S3(T3);
  const auto R3 = radial_polar_data(S3, Point<3>(Vec<3>(1, 2, 3)), Vec<3>(0.6, 0.0, 0.8), 2.0, 20);
  for (const auto& s : R3.samples) {
    EXPECT_NEAR(s.H, 2.0 / s.rho, 1e-9);
    EXPECT_NEAR(s.area, s.rho * s.rho, 1e-9);
    EXPECT_NEAR(s.A2_free, 0.0, 1e-9);
  }
}

TEST(Radial, FlatTorusCutDetected) {
  const auto M = catalog::flat_torus<2>();
  DistanceSolver<2> S(M);
  const auto R = radial_polar_data(S, Point<2>(Vec<2>(0, 0)), Vec<2>(1, 0), 5.0, 100);
  EXPECT_EQ(R.truncation, Truncation::Cut);
  EXPECT_GT(R.truncated_at, kPi);
  EXPECT_LT(R.truncated_at, kPi * 1.01 + 0.05);
}

TEST(Radial, RoundSphereCotangent) {
  const auto M = catalog::round_sphere();
  DistanceSolver<2> S(M);
  const Point<2> p(Vec<2>(0.3, -0.2));
  const Vec<2> raw(0.4, 1.0);
  const Vec<2> dir = raw / vector_norm(M, p, raw);
  const auto R = radial_polar_data(S, p, dir, 3.6, 120);
  EXPECT_NE(R.truncation, Truncation::None);
  EXPECT_LT(R.truncated_at, kPi + 0.06);
  EXPECT_GT(R.samples.back().rho, kPi - 0.1);
  for (const auto& s : R.samples) {
    EXPECT_NEAR(s.H, std::cos(s.rho) / std::sin(s.rho), 1e-7 * (1 + std::abs(s.H)));
    EXPECT_NEAR(s.area, std::sin(s.rho), 1e-8);
  }
}

TEST(Radial, ConstantFieldDriftCurvature) {
  const double c = 0.5, alpha = 0.9;
  const Vec<2> X(c, 0);
  const auto M = catalog::flat_torus<2>(CovectorField<2>::constant(X));
  DistanceSolver<2> S(M);
  const auto R = radial_polar_data(S, Point<2>(Vec<2>(2, 2)), Vec<2>(std::cos(alpha), std::sin(alpha)), 3.0, 60);
  for (const auto& s : R.samples) EXPECT_NEAR(s.H_X, 1.0 / s.rho - c * std::cos(alpha), 1e-9);
  for (double r : riccati_residual(R, 2.0)) EXPECT_LT(std::abs(r), 1e-4);
}

TEST(Radial, LogAreaDerivativeIsMeanCurvature) {
  auto M = catalog::warped_product(0.3, 1.0, 10.0);
  auto t = CovectorField<2>::constant(Vec<2>(0.2, 0.1));
  apply_field(M, t);
  DistanceSolver<2> S(M);
  const Point<2> p(Vec<2>(0.5, 1.0));
  const Vec<2> raw(0.8, 0.6);
  const auto R = radial_polar_data(S, p, Vec<2>(raw / vector_norm(M, p, raw)), 2.0, 400, {0.005, -1e6, false});
  for (std::size_t i = 1; i + 1 < R.samples.size(); ++i) {
    const auto& a = R.samples[i - 1];
    const auto& b = R.samples[i + 1];
    if (R.samples[i].rho < 0.3) continue;  // differencing error dominates near the origin
    const double dlog = (std::log(b.area) - std::log(a.area)) / (b.rho - a.rho);
    EXPECT_NEAR(dlog, R.samples[i].H, 1e-4 * (1 + std::abs(R.samples[i].H)));
    EXPECT_NEAR((b.H_X - a.H_X) / (b.rho - a.rho), R.samples[i].dH_X, 1e-3 * (1 + std::abs(R.samples[i].dH_X)));
  }
  for (double r : riccati_residual(R, 1.5)) EXPECT_LT(std::abs(r), 1e-3);
}

TEST(Radial, RiccatiResidualOnSphereAndProduct) {
  const auto M = catalog::round_sphere(catalog::sphere_rotation(0.4));
  DistanceSolver<2> S(M);
  const Point<2> p(Vec<2>(0.2, 0.1));
  const Vec<2> raw(1.0, 0.3);
  const auto R = radial_polar_data(S, p, Vec<2>(raw / vector_norm(M, p, raw)), 2.5, 500);
  for (double r : riccati_residual(R, 2.0)) EXPECT_LT(std::abs(r), 1e-4);
  const auto P = catalog::s1xs2(1.0, CovectorField<3>::constant(Vec<3>(0.3, 0, 0)));
  DistanceSolver<3> S3(P);
  const Point<3> q(Vec<3>(1.0, 0.2, -0.3));
  const Vec<3> raw3(0.5, 0.4, 0.6);
  const auto R3 = radial_polar_data(S3, q, Vec<3>(raw3 / vector_norm(P, q, raw3)), 2.0, 400);
  ASSERT_GT(R3.samples.size(), 100u);
  for (double r : riccati_residual(R3, 2.0)) EXPECT_LT(std::abs(r), 1e-4);
}
