#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "belab/catalog.hpp"
#include "belab/drift_pde.hpp"

using namespace belab;

namespace {

constexpr double kPi = 3.14159265358979323846;

template <int N>
std::size_t centre_node(const Grid<N>& G) {
  typename Grid<N>::Index m;
  for (int k = 0; k < N; ++k) m[k] = G.count[k] / 2;
  return G.index(m);
}

// Patch around c sampled from f, every node interior.
MeshField<2> local_field(const Vec<2>& c, double h, const std::function<double(const Vec<2>&)>& f, int half = 3,
                         int chart = 0) {
  return MeshField<2>::sample(Grid<2>::patch(chart, c, h, half), f);
}

// Rectangle patch with the outer ring as Dirichlet boundary.
MeshField<2> boxed(const Grid<2>& G) {
  MeshField<2> u(G);
  for (std::size_t i = 0; i < G.size(); ++i) {
    const auto m = G.multi(i);
    const bool edge = m[0] == 0 || m[1] == 0 || m[0] == G.count[0] - 1 || m[1] == G.count[1] - 1;
    u.kind[i] = edge ? NodeKind::Boundary : NodeKind::Interior;
  }
  return u;
}

double sphere_u(const Vec<2>& x) { return catalog::sphere_height(x); }

}  // namespace

TEST(MeshField, QuadraticsAreExactOnFlatGrids) {
  auto f = [](const Vec<2>& x) { return 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[0] + 3.0 * x[0] * x[1] - x[1] * x[1]; };
  const auto u = local_field(Vec<2>(0.4, -0.2), 0.1, f);
  const std::size_t c = centre_node(u.grid);
  const Vec<2> x = u.grid.coord(c);
  const Vec<2> grad = mesh::gradient(u, c);
  EXPECT_NEAR(grad[0], 2.0 + x[0] + 3.0 * x[1], 1e-12);
  EXPECT_NEAR(grad[1], -1.0 + 3.0 * x[0] - 2.0 * x[1], 1e-12);
  const Mat<2> H = mesh::coordinate_hessian(u, c);
  EXPECT_NEAR(H(0, 0), 1.0, 1e-10);
  EXPECT_NEAR(H(0, 1), 3.0, 1e-10);
  EXPECT_NEAR(H(1, 1), -2.0, 1e-10);
}

TEST(MeshField, ValidationAndCsv) {
  Grid<2> G = Grid<2>::patch(0, Vec<2>(0, 0), 0.5, 1);
  MeshField<2> u(G);
  EXPECT_NO_THROW(u.validate());
  u[4] = std::nan("");
  EXPECT_THROW(u.validate(), DomainError);
  u.kind[4] = NodeKind::Inactive;
  EXPECT_NO_THROW(u.validate());
  u.kind[0] = NodeKind::Boundary;
  std::ostringstream os;
  u.write_csv(os);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "x0,x1,value,kind");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 9);  // header + 8 active nodes
  EXPECT_NE(s.find("-0.5,-0.5,0,boundary"), std::string::npos);
  Grid<2> bad = G;
  bad.spacing[0] = 0.0;
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(DriftLaplacian, FlatQuadratic) {
  const auto M = catalog::flat_torus<2>();
  const auto u = local_field(Vec<2>(1.0, 2.0), 0.05, [](const Vec<2>& x) { return x[0] * x[0]; });
  EXPECT_NEAR(drift_laplacian(M, u, centre_node(u.grid)), 2.0, 1e-9);
}

TEST(DriftLaplacian, ExponentialIsDriftHarmonic) {
  const double c = 0.8;
  const auto M = catalog::flat_torus<2>(CovectorField<2>::constant(Vec<2>(c, 0.0)));
  for (double h : {0.02, 0.01}) {
    const auto u = local_field(Vec<2>(1.0, 2.0), h, [c](const Vec<2>& x) { return std::exp(c * x[0]); });
    // truncation of u'' - c u' is h^2 c^4 e^{cx} (1/12 - 1/6)
    EXPECT_NEAR(drift_laplacian(M, u, centre_node(u.grid)), 0.0, 0.1 * h * h * std::exp(c * 1.0));
  }
}

TEST(DriftLaplacian, SphereFirstHarmonic) {
  const auto M = catalog::round_sphere();
  for (const Vec<2> c : {Vec<2>(0.3, 0.2), Vec<2>(-0.7, 0.5)}) {
    const auto u = local_field(c, 1e-3, sphere_u);
    const std::size_t i = centre_node(u.grid);
    EXPECT_NEAR(drift_laplacian(M, u, i), -2.0 * u[i], 1e-5);
  }
  // same function seen from the other chart: the height flips sign
  const auto v = local_field(Vec<2>(0.2, -0.4), 1e-3, [](const Vec<2>& x) { return -sphere_u(x); }, 3, 1);
  const std::size_t i = centre_node(v.grid);
  EXPECT_NEAR(drift_laplacian(M, v, i), -2.0 * v[i], 1e-5);
}

TEST(DriftLaplacian, DivergenceFormAgreesOnWarpedMetric) {
  // (1/f) d_x(f u_x) + f^{-2} u_tt for the metric dx^2 + f^2 dt^2, u = sin x cos t
  const double a = 0.3;
  const auto M = catalog::warped_product(a, 1.0, 10.0);
  const Vec<2> c(0.4, 1.1);
  const auto u = local_field(c, 1e-3, [](const Vec<2>& x) { return std::sin(x[0]) * std::cos(x[1]); });
  const double f = 1 + a * std::sin(c[0]), fp = a * std::cos(c[0]);
  const double exact = (-std::sin(c[0]) + fp / f * std::cos(c[0])) * std::cos(c[1]) -
                       std::sin(c[0]) * std::cos(c[1]) / (f * f);
  EXPECT_NEAR(drift_laplacian(M, u, centre_node(u.grid)), exact, 1e-6);
}

namespace {

double bochner_at(const ChartManifold<2>& M, double m, const Vec<2>& c, double h,
                  const std::function<double(const Vec<2>&)>& f) {
  const auto u = local_field(c, h, f, 4);
  return bochner_residual(M, m, u, centre_node(u.grid));
}

void expect_second_order(const ChartManifold<2>& M, double m, const Vec<2>& c,
                         const std::function<double(const Vec<2>&)>& f) {
  const double r1 = bochner_at(M, m, c, 2e-2, f);
  const double r2 = bochner_at(M, m, c, 1e-2, f);
  EXPECT_LE(std::abs(r2), 1e-3);
  EXPECT_GE(std::log2(std::abs(r1) / std::abs(r2)), 1.8) << r1 << " " << r2;
}

}  // namespace

TEST(Bochner, LinearFunctionOnFlatTorus) {
  const auto M = catalog::flat_torus<2>();
  EXPECT_NEAR(bochner_at(M, 1.0, Vec<2>(1, 1), 0.05, [](const Vec<2>& x) { return 2 * x[0] - x[1]; }), 0.0, 1e-9);
}

TEST(Bochner, SineOnFlatTorusConverges) {
  auto f = [](const Vec<2>& x) { return std::sin(x[0]); };
  expect_second_order(catalog::flat_torus<2>(), 1.0, Vec<2>(0.7, 0.3), f);
  const auto MX = catalog::flat_torus<2>(CovectorField<2>::constant(Vec<2>(0.6, 0.0)));
  expect_second_order(MX, 2.0, Vec<2>(0.7, 0.3), f);
}

TEST(Bochner, SphereWithKillingFieldConverges) {
  expect_second_order(catalog::round_sphere(), 1.0, Vec<2>(0.6, 0.3), sphere_u);
  expect_second_order(catalog::round_sphere(catalog::sphere_rotation(0.5)), 3.0, Vec<2>(0.6, 0.3), sphere_u);
}

TEST(Bochner, NeedsTwoNodeMargin) {
  const auto M = catalog::flat_torus<2>();
  const auto u = local_field(Vec<2>(1, 1), 0.1, [](const Vec<2>& x) { return x[0]; }, 3);
  EXPECT_THROW(bochner_residual(M, 1.0, u, u.grid.index({1, 3})), DomainError);
  EXPECT_THROW(bochner_residual(M, 0.0, u, centre_node(u.grid)), DomainError);
}

TEST(Dirichlet, DriftStripMatchesClosedForm) {
  // u'' - c u' = 0 with u = e^{cx} on the boundary; the exact solution is e^{cx} itself
  const double c = 1.5;
  const auto M = catalog::flat_torus<2>(CovectorField<2>::constant(Vec<2>(c, 0.0)));
  double prev = 0.0;
  for (double h : {0.04, 0.02}) {
    Grid<2> G = Grid<2>::patch(0, Vec<2>(2.0, 2.0), h, static_cast<int>(std::lround(0.5 / h)));
    auto data = boxed(G);
    for (std::size_t i = 0; i < G.size(); ++i)
      if (data.kind[i] == NodeKind::Boundary) data[i] = std::exp(c * (G.coord(i)[0] - 2.0));
    const auto sol = solve_drift_dirichlet(M, data);
    EXPECT_LE(sol.residual, 1e-10);
    double err = 0.0;
    for (std::size_t i = 0; i < G.size(); ++i) err = std::max(err, std::abs(sol.u[i] - std::exp(c * (G.coord(i)[0] - 2.0))));
    EXPECT_LE(err, 1e-3);
    if (prev > 0.0) EXPECT_GE(std::log2(prev / err), 1.8);
    prev = err;
  }
}

TEST(Dirichlet, LinearDataOnFlatDisk) {
  const auto M = catalog::flat_torus<2>();
  DistanceSolver<2> S(M);
  const auto ball = ball_mesh(S, Point<2>(Vec<2>(kPi, kPi)), 1.0, 0.1);
  EXPECT_GT(ball.interior.size(), 250u);
  auto data = ball.field;
  auto lin = [](const Vec<2>& x) { return 0.3 + 1.2 * x[0] - 0.7 * x[1]; };
  for (std::size_t i : ball.boundary) data[i] = lin(ball.grid().coord(i));
  const auto sol = solve_drift_dirichlet(M, data);
  for (std::size_t i : ball.interior) EXPECT_NEAR(sol.u[i], lin(ball.grid().coord(i)), 1e-10);
}

TEST(Dirichlet, DiscreteMaximumPrinciple) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto torus = catalog::flat_torus<2>(CovectorField<2>::constant(Vec<2>(0.5, -0.3)));
  const auto sphere = catalog::round_sphere(catalog::sphere_rotation(0.7));
  for (const auto* M : {&torus, &sphere}) {
    Grid<2> G = Grid<2>::patch(0, Vec<2>(0.5, 0.5), 0.05, 10);
    auto data = boxed(G);
    for (std::size_t i = 0; i < G.size(); ++i)
      if (data.kind[i] == NodeKind::Boundary) data[i] = U(rng);
    // drift-subharmonic: Delta_X u = s >= 0
    Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(G.size()));
    for (Eigen::Index k = 0; k < s.size(); ++k) s[k] = 0.5 * (1.0 + U(rng));
    const auto sol = solve_drift_dirichlet(*M, data, s);
    double bmax = -1e300, imax = -1e300;
    for (std::size_t i = 0; i < G.size(); ++i)
      (data.kind[i] == NodeKind::Boundary ? bmax : imax) = std::max(data.kind[i] == NodeKind::Boundary ? bmax : imax, sol.u[i]);
    EXPECT_LE(imax, bmax + 1e-12) << M->name;
  }
}

TEST(Dirichlet, NonInteriorStencilIsRejected) {
  const auto M = catalog::flat_torus<2>();
  MeshField<2> u(Grid<2>::patch(0, Vec<2>(1, 1), 0.1, 2));  // every node interior, edges lack neighbours
  EXPECT_THROW(solve_drift_dirichlet(M, u), DomainError);
}

TEST(BallMesh, KindsFollowDistance) {
  const auto M = catalog::round_sphere();
  DistanceSolver<2> S(M);
  const Point<2> p(Vec<2>(0.2, 0.1));
  const auto ball = ball_mesh(S, p, 0.8, 0.08);
  for (std::size_t i : ball.interior) EXPECT_LT(ball.distance[i], 0.8);
  for (std::size_t i : ball.boundary) EXPECT_GE(ball.distance[i], 0.8);
  for (std::size_t i : ball.interior) EXPECT_TRUE(mesh::has_stencil(ball.field, i));
  EXPECT_THROW(ball_mesh(S, p, 0.5, 0.6), DomainError);
}

namespace {

struct CylinderSetup {
  double L;
  ChartManifold<2> M;
  DistanceSolver<2> S;
  TriangleConfig<2> T;

  explicit CylinderSetup(double L_, double amplitude = 0.0)
      : L(L_),
        M(amplitude == 0.0 ? catalog::cylinder(1.0, L_ + 10.0) : catalog::warped_product(amplitude, 1.0, L_ + 10.0)),
        S(M),
        T(TriangleConfig<2>::make(S, Point<2>(Vec<2>(0.0, kPi)), Point<2>(Vec<2>(L_, kPi)),
                                  Point<2>(Vec<2>(-L_, kPi)), 0.999 * L_, 1e-6)) {}
};

}  // namespace

TEST(Replacement, CylinderBusemannIsAlreadyHarmonic) {
  CylinderSetup C(1e5);
  const auto ball = ball_mesh(C.S, C.T.p, 1.0, 0.1);
  const auto Rp = x_harmonic_replacement(C.S, C.T, 1, ball);
  const auto Rm = x_harmonic_replacement(C.S, C.T, -1, ball);
  EXPECT_LE(Rp.residual, 1e-10);
  double worst = 0.0, sum = 0.0, bsum = 0.0;
  for (std::size_t i : ball.interior) {
    worst = std::max(worst, std::abs(Rp.h[i] - Rp.b[i]));
    EXPECT_NEAR(Rp.h[i], -ball.grid().coord(i)[0], 1e-4);
    sum = std::max(sum, std::abs(Rp.h[i] + Rm.h[i]));
  }
  for (std::size_t i : ball.boundary) bsum = std::max(bsum, std::abs(Rp.b[i] + Rm.b[i]));
  EXPECT_LE(worst, 1e-4);
  EXPECT_LE(sum, bsum + 1e-10);
  EXPECT_LE(Rp.max_principle_gap, 1e-12);
  EXPECT_THROW(x_harmonic_replacement(C.S, C.T, 0, ball), DomainError);
}

TEST(Replacement, SumControlOnWarpedCylinder) {
  CylinderSetup C(30.0, 0.05);
  const auto ball = ball_mesh(C.S, C.T.p, 1.0, 0.125);
  const auto Rp = x_harmonic_replacement(C.S, C.T, 1, ball, false);
  const auto Rm = x_harmonic_replacement(C.S, C.T, -1, ball, false);
  double sum = 0.0, bsum = 0.0;
  for (std::size_t i : ball.interior) sum = std::max(sum, std::abs(Rp.h[i] + Rm.h[i]));
  for (std::size_t i : ball.boundary) bsum = std::max(bsum, std::abs(Rp.b[i] + Rm.b[i]));
  EXPECT_LE(sum, bsum + 1e-10);
  EXPECT_LE(Rp.max_principle_gap, 1e-10);
  EXPECT_LE(Rm.max_principle_gap, 1e-10);
  EXPECT_THROW(hessian_quantities(C.M, ball, Rp), DomainError);
}

TEST(Replacement, ExactCylinderHessianQuantitiesVanish) {
  CylinderSetup C(1e5);
  const auto Q = hessian_estimates(C.S, C.T, 2.0, 0.1);
  EXPECT_LE(Q.sup_diff, 1e-4);
  EXPECT_LE(Q.grad_diff, 1e-4);
  EXPECT_LE(Q.hess, 1e-4);
  EXPECT_GT(Q.interior_nodes, 1000u);
}

TEST(Eigenfunction, ZeroAndConstantFieldsGiveConstants) {
  for (const auto& M : {catalog::flat_torus<2>(), catalog::flat_torus<2>(CovectorField<2>::constant(Vec<2>(0.4, -0.9)))}) {
    const auto E = principal_eigenfunction(M, 24);
    EXPECT_LE(E.residual, 1e-8);
    for (std::size_t i = 0; i < E.u0.size(); ++i) {
      EXPECT_NEAR(E.u0[i], 1.0, 1e-10);
      EXPECT_NEAR(E.f[i], 0.0, 1e-10);
    }
  }
}

namespace {

CovectorField<2> d_sin_x(double extra_y = 0.0) {
  return {[extra_y](const Vec<2>& x) -> Vec<2> { return Vec<2>(std::cos(x[0]), extra_y); },
          [](const Vec<2>& x) -> Mat<2> {
            Mat<2> J = Mat<2>::Zero();
            J(0, 0) = -std::sin(x[0]);
            return J;
          }};
}

}  // namespace

TEST(Eigenfunction, GradientFieldMatchesIntegratingFactor) {
  // (u' + u cos x)' = 0 has the periodic solution e^{-sin x}
  const auto M = catalog::flat_torus<2>(d_sin_x());
  double prev = 0.0;
  for (int n : {32, 64}) {
    const auto E = principal_eigenfunction(M, n);
    double err = 0.0;
    for (std::size_t i = 0; i < E.u0.size(); ++i) {
      const Vec<2> x = E.u0.grid.coord(i);
      err = std::max(err, std::abs(E.f[i] - std::sin(x[0])));
    }
    EXPECT_LE(err, 0.2 * E.u0.grid.min_spacing() * E.u0.grid.min_spacing());
    if (prev > 0.0) EXPECT_GE(std::log2(prev / err), 1.8);
    prev = err;
  }
  // a harmonic part along y does not change u0
  const auto E = principal_eigenfunction(catalog::flat_torus<2>(d_sin_x(0.3)), 32);
  for (std::size_t i = 0; i < E.u0.size(); ++i) EXPECT_NEAR(E.f[i], std::sin(E.u0.grid.coord(i)[0]), 1e-2);
}

TEST(Eigenfunction, WeakFormKernel) {
  CovectorField<2> X{[](const Vec<2>& x) -> Vec<2> { return Vec<2>(std::cos(x[0]), std::sin(x[0])); }, {}};
  const auto M = catalog::flat_torus<2>(X);
  const auto E = principal_eigenfunction(M, 32, 5);
  EXPECT_NEAR(E.u0[5], 1.0, 1e-14);
  EXPECT_GT(E.u0.values.minCoeff(), 0.0);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  const Eigen::VectorXd wu = E.weight.cwiseProduct(E.u0.values);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd phi(E.u0.values.size());
    for (Eigen::Index k = 0; k < phi.size(); ++k) phi[k] = g(rng);
    const Eigen::VectorXd Aphi = E.A * phi;
    const double pairing = wu.dot(Aphi);
    EXPECT_LE(std::abs(pairing), 1e-8 * wu.cwiseAbs().dot(Aphi.cwiseAbs())) << t;
  }
  // divergence of u0 X + grad u0 vanishes to discretization order
  double div = 0.0, scale = 0.0;
  const auto& G = E.u0.grid;
  for (std::size_t i = 0; i < G.size(); ++i) {
    double s = 0.0;
    for (int k = 0; k < 2; ++k) {
      typename Grid<2>::Index p{}, m{};
      p[k] = 1;
      m[k] = -1;
      const auto ip = static_cast<std::size_t>(G.offset(i, p)), im = static_cast<std::size_t>(G.offset(i, m));
      const double fp = E.u0[ip] * M.X(G.point(ip))[k], fm = E.u0[im] * M.X(G.point(im))[k];
      s += (fp - fm) / (2 * G.spacing[k]);
    }
    s += drift_laplacian(catalog::flat_torus<2>(), E.u0, i);
    div = std::max(div, std::abs(s));
    scale = std::max(scale, E.u0[i]);
  }
  EXPECT_LE(div, 2e-2 * scale);
}

TEST(Eigenfunction, RejectsNonPeriodicCharts) {
  EXPECT_THROW(principal_eigenfunction(catalog::cylinder(), 16), DomainError);
  EXPECT_THROW(principal_eigenfunction(catalog::round_sphere(), 16), DomainError);
}

TEST(ChengYau, ConstantFunction) {
  const auto M = catalog::flat_torus<2>();
  DistanceSolver<2> S(M);
  const Grid<2> G = Grid<2>::patch(0, Vec<2>(kPi, kPi), 0.1, 14);
  MeshField<2> u = MeshField<2>::sample(G, [](const Vec<2>&) { return 2.0; });
  MeshField<2> a(G);
  const auto R = cheng_yau_check(S, BakryEmeryParams{1.0, 0.0, 0.0}, u, a, ScalarFunction::identity(), 0.5, 1.2,
                                 Point<2>(Vec<2>(kPi, kPi)));
  EXPECT_TRUE(R.passed);
  EXPECT_NEAR(R.lhs.get<double>(), 0.0, 1e-20);
  EXPECT_GE(R.rhs.get<double>(), 1.0);
}

TEST(ChengYau, ExponentialOnFlatTorus) {
  const auto M = catalog::flat_torus<2>();
  DistanceSolver<2> S(M);
  const Vec<2> a0(0.6, -0.8);
  const Grid<2> G = Grid<2>::patch(0, Vec<2>(kPi, kPi), 0.02, 70);
  MeshField<2> u = MeshField<2>::sample(G, [&](const Vec<2>& x) { return std::exp(a0.dot(x - Vec<2>(kPi, kPi))); });
  MeshField<2> a = MeshField<2>::sample(G, [&](const Vec<2>&) { return a0.squaredNorm(); });
  const auto R = cheng_yau_check(S, BakryEmeryParams{1.0, 0.0, 0.0}, u, a, ScalarFunction::identity(), 0.5, 1.2,
                                 Point<2>(Vec<2>(kPi, kPi)));
  EXPECT_TRUE(R.passed);
  EXPECT_NEAR(R.lhs.get<double>(), 1.0, 1e-3);
  EXPECT_GE(R.rhs.get<double>(), 8 * 2 * 1.0);
  // wrong a breaks the equation
  MeshField<2> bad = MeshField<2>::sample(G, [](const Vec<2>&) { return 3.0; });
  EXPECT_THROW(cheng_yau_check(S, BakryEmeryParams{1.0, 0.0, 0.0}, u, bad, ScalarFunction::identity(), 0.5, 1.2,
                               Point<2>(Vec<2>(kPi, kPi))),
               HypothesisViolation);
}

TEST(ChengYau, PrincipalEigenfunctionWithNegatedField) {
  for (double extra : {0.0, 0.4}) {
    const auto M = catalog::flat_torus<2>(d_sin_x(extra));
    const auto E = principal_eigenfunction(M, 96);
    const auto Mneg = M.with_negated_X();
    const BakryEmeryParams params{2.0, required_delta(Mneg, 2.0, sample_grid(Mneg, 48)), sup_X_norm(Mneg, sample_grid(Mneg, 48))};
    MeshField<2> a(E.u0.grid);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = -divergence_X(M, E.u0.grid.point(i));
    DistanceSolver<2> S(Mneg);
    const auto R = cheng_yau_check(S, params, E.u0, a, ScalarFunction::identity(), 1.0, 2.0,
                                   Point<2>(Vec<2>(kPi, 1.0)));
    EXPECT_TRUE(R.passed) << R.to_json().dump();
    EXPECT_GE(R.margin, 0.0);
    // the hypothesis |X| <= C is enforced
    BakryEmeryParams tight = params;
    tight.C = 0.5 * params.C;
    EXPECT_THROW(cheng_yau_check(S, tight, E.u0, a, ScalarFunction::identity(), 1.0, 2.0, Point<2>(Vec<2>(kPi, 1.0))),
                 HypothesisViolation);
  }
}

TEST(ChengYau, C0Construction) {
  EXPECT_GE(cheng_yau_C0(2, 1.0, 0.0, 0.5, 1.0), 1.0);
  // a wider annulus gives a smaller cut-off constant
  EXPECT_LT(cheng_yau_C0(2, 1.0, 0.0, 0.5, 2.0), cheng_yau_C0(2, 1.0, 0.0, 0.5, 1.0));
  EXPECT_LT(cheng_yau_C0(2, 1.0, 0.0, 0.5, 1.0), cheng_yau_C0(2, 1.0, 0.5, 0.5, 1.0));
  EXPECT_THROW(cheng_yau_C0(2, 1.0, 0.0, 1.0, 0.5), DomainError);
}

TEST(QuantitativeMaxPrinciple, ZeroField) {
  const auto M = catalog::flat_torus<2>();
  DistanceSolver<2> S(M);
  const Point<2> x(Vec<2>(kPi, kPi));
  const auto ball = ball_mesh(S, x, 1.0, 0.1);
  MeshField<2> U = ball.field;
  const auto R = quantitative_max_principle_check(S, BakryEmeryParams{1.0, 0.0, 0.0}, ball, U,
                                                  Point<2>(Vec<2>(kPi + 0.5, kPi)), 1.0, 1.0, {0.1, 0.2, 0.4});
  EXPECT_TRUE(R.passed);
  EXPECT_GT(R.margin, 0.0);
}

TEST(QuantitativeMaxPrinciple, ShiftedParaboloidOnFlatDisk) {
  const auto M = catalog::flat_torus<2>();
  DistanceSolver<2> S(M);
  const Vec<2> c(kPi, kPi);
  const double r = 1.0, h = 0.05;
  const auto ball = ball_mesh(S, Point<2>(c), r, h);
  MeshField<2> U = ball.field;
  for (std::size_t i = 0; i < U.size(); ++i) U[i] = (ball.grid().coord(i) - c).squaredNorm() - r * r;
  const std::vector<double> r0s{0.05, 0.1, 0.2, 0.3, 0.45};
  const auto R = quantitative_max_principle_check(S, BakryEmeryParams{1.0, 0.0, 0.0}, ball, U,
                                                  Point<2>(Vec<2>(kPi + 0.5, kPi)), 4.0, 2.0 * (r + 2 * h), r0s);
  EXPECT_TRUE(R.passed);
  EXPECT_NEAR(R.lhs.get<double>(), -1.0, 1e-12);
  EXPECT_EQ(R.rhs.size(), r0s.size());
  // violated hypotheses name themselves
  EXPECT_THROW(quantitative_max_principle_check(S, BakryEmeryParams{1.0, 0.0, 0.0}, ball, U,
                                                Point<2>(Vec<2>(kPi + 0.5, kPi)), 3.0, 2.0 * (r + 2 * h), r0s),
               HypothesisViolation);
  EXPECT_THROW(quantitative_max_principle_check(S, BakryEmeryParams{1.0, 0.0, 0.0}, ball, U,
                                                Point<2>(Vec<2>(kPi + 0.5, kPi)), 4.0, 1.0, r0s),
               HypothesisViolation);
  EXPECT_THROW(quantitative_max_principle_check(S, BakryEmeryParams{1.0, 0.0, 0.0}, ball, U,
                                                Point<2>(Vec<2>(kPi + 0.5, kPi)), 4.0, 2.0 * (r + 2 * h), {0.9}),
               DomainError);
}
