#include <array>
#include <chrono>
#include <cmath>
#include <random>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/numeric/odeint.hpp>
#include <gtest/gtest.h>

#include "belab/modelspace.hpp"

using namespace belab;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Independent oracles ------------------------------------------------------

double oracle_ell(double lambda, double rho) {
  if (lambda > 0) return std::sin(std::sqrt(lambda) * rho) / std::sqrt(lambda);
  if (lambda < 0) return std::sinh(std::sqrt(-lambda) * rho) / std::sqrt(-lambda);
  return rho;
}

double green_closed_d3(double rho) { return rho * rho / 6.0 + 1.0 / (3.0 * rho) - 0.5; }

// G_r(x) = int_x^r l^{1-d}(t) int_t^r l^{d-1}(s) ds dt by nested Simpson sums.
double green_double_quadrature(double d, double lambda, double r, double x) {
  auto l = [&](double t) { return oracle_ell(lambda, t); };
  const int n = 4000;
  auto inner = [&](double t) {
    const int k = 400;
    const double h = (r - t) / k;
    double s = 0;
    for (int i = 0; i <= k; ++i) {
      double w = (i == 0 || i == k) ? 1 : (i % 2 ? 4 : 2);
      s += w * std::pow(l(t + i * h), d - 1);
    }
    return s * h / 3.0;
  };
  const double h = (r - x) / n;
  double s = 0;
  for (int i = 0; i <= n; ++i) {
    double t = x + i * h;
    double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    s += w * std::pow(l(t), 1 - d) * inner(t);
  }
  return s * h / 3.0;
}

double hbar_series(double t) {
  double t2 = t * t;
  return 1 - t2 / 5 + 2 * t2 * t2 / 63 - t2 * t2 * t2 / 225;
}

double hbar_oracle(double t) {
  if (t < 0.05) return hbar_series(t);
  double s = std::sinh(t);
  return 3 * (s * s - t * t) / (t * t * s * s);
}

}  // namespace

TEST(Ell, ClosedFormCases) {
  EXPECT_DOUBLE_EQ(ell(ModelSpace(3, 0), 2.0), 2.0);
  EXPECT_NEAR(ell(ModelSpace(3, -1), 1.0), 1.1752011936438014, 1e-14);
  EXPECT_NEAR(ell(ModelSpace(3, 1), kPi / 2), 1.0, 1e-14);
  EXPECT_THROW(ell(ModelSpace(3, 1), kPi), DomainError);
  EXPECT_THROW(ell(ModelSpace(3, 0), -0.1), DomainError);
}

TEST(Ell, MatchesOracleAndContinuousAtZero) {
  for (double lam : {-2.0, -0.3, -1e-9, 0.0, 1e-9, 0.4}) {
    ModelSpace M(3, lam);
    for (double rho = 0; rho < 3.0; rho += 0.01)
      EXPECT_NEAR(ell(M, rho), oracle_ell(lam, rho), 1e-12 * (1 + rho));
  }
  EXPECT_NEAR(ell(ModelSpace(3, -1e-12), 1.5), 1.5, 1e-10);
  EXPECT_NEAR(ell(ModelSpace(3, 1e-12), 1.5), 1.5, 1e-10);
}

TEST(Ell, SolvesJacobiEquation) {
  namespace ode = boost::numeric::odeint;
  using S = std::array<double, 2>;
  for (double lam : {-1.5, -0.04, 0.0, 0.7}) {
    ModelSpace M(3, lam);
    S s{0.0, 1.0};
    double t = 0.0;
    auto st = ode::make_dense_output(1e-13, 1e-13, ode::runge_kutta_dopri5<S>());
    st.initialize(s, 0.0, 1e-3);
    auto sys = [lam](const S& y, S& dy, double) { dy[0] = y[1]; dy[1] = -lam * y[0]; };
    for (double rho = 0.05; rho < 3.0; rho += 0.05) {
      while (st.current_time() < rho) st.do_step(sys);
      S y;
      st.calc_state(rho, y);
      EXPECT_NEAR(ell(M, rho), y[0], 1e-9 * std::max(1.0, std::abs(y[0])));
      EXPECT_NEAR(ell_prime(M, rho), y[1], 1e-9 * std::max(1.0, std::abs(y[1])));
      (void)t;
    }
    EXPECT_EQ(ell(M, 0.0), 0.0);
    EXPECT_EQ(ell_prime(M, 0.0), 1.0);
  }
}

TEST(MeanCurvature, Examples) {
  EXPECT_NEAR(model_mean_curvature(ModelSpace(3, 0), 2.0), 1.0, 1e-15);
  EXPECT_NEAR(model_mean_curvature(ModelSpace(3.5, 0), 1.0), 2.5, 1e-15);
  EXPECT_NEAR(model_mean_curvature(ModelSpace(2, -1), 40.0), 1.0, 1e-14);
  EXPECT_THROW(model_mean_curvature(ModelSpace(2, -1), 0.0), DomainError);
}

TEST(MeanCurvature, AlgebraicIdentityAndMonotone) {
  for (double d : {2.0, 3.0, 4.7}) {
    for (double lam : {-2.0, -0.1, 0.0}) {
      ModelSpace M(d, lam);
      double prev = INFINITY;
      for (double rho = 0.01; rho < 5; rho += 0.01) {
        double H = model_mean_curvature(M, rho);
        EXPECT_NEAR(H * ell(M, rho) / ell_prime(M, rho), d - 1, 1e-12 * d);
        EXPECT_LT(H, prev);
        prev = H;
      }
    }
  }
}

TEST(GreenBarrier, ClosedFormD3) {
  auto gb = green_barrier(ModelSpace(3, 0), 1.0);
  EXPECT_NEAR(gb.value(0.5), 0.20833333333333334, 1e-10);
  EXPECT_NEAR(gb.value(1.0), 0.0, 1e-14);
  EXPECT_NEAR(gb.derivative(1.0), 0.0, 1e-14);
  double worst = 0;
  for (double rho = 0.05; rho <= 1.0; rho += 0.00037)
    worst = std::max(worst, std::abs(gb.value(rho) - green_closed_d3(rho)));
  EXPECT_LT(worst, 1e-8);
  for (double rho = 0.05; rho < 1.0; rho += 0.013)
    EXPECT_NEAR(gb.derivative(rho), rho / 3 - 1 / (3 * rho * rho), 1e-7);
}

TEST(GreenBarrier, MatchesDoubleQuadrature) {
  auto gb = green_barrier(ModelSpace(4, -0.01), 2.0);
  EXPECT_NEAR(gb.value(1.0), green_double_quadrature(4, -0.01, 2.0, 1.0), 1e-8);
}

TEST(GreenBarrier, InvariantsAndRadialOperator) {
  for (auto [d, lam, r] : {std::tuple{3.0, 0.0, 1.0}, {4.0, -0.01, 2.0}, {2.5, -0.3, 1.5}}) {
    ModelSpace M(d, lam);
    auto gb = green_barrier(M, r);
    for (double rho = 0.01 * r; rho < r; rho += 0.01 * r) {
      EXPECT_GT(gb.value(rho), 0);
      EXPECT_LT(gb.derivative(rho), 0);
    }
    // conservative discrete radial operator on the stored samples:
    // [l^{d-1} G'] over [rho_{k+1}, rho_{k-1}] divided by the integral of l^{d-1}
    auto w = [&](double t) { return std::pow(oracle_ell(lam, t), d - 1); };
    for (std::size_t k = 1; k + 1 < gb.rho.size(); k += 7) {
      double a = gb.rho[k + 1], b = gb.rho[k - 1];
      if (a < 0.05 * r) break;
      double flux = w(b) * gb.dG[k - 1] - w(a) * gb.dG[k + 1];
      boost::math::quadrature::tanh_sinh<double> ts;
      EXPECT_NEAR(flux / ts.integrate(w, a, b), 1.0, 1e-6);
    }
    // asymptotic continuation is continuous at the last integrated point
    double x0 = gb.rho_min();
    EXPECT_NEAR(gb.value(x0 * (1 - 1e-9)), gb.value(x0), 1e-6 * gb.value(x0));
  }
  EXPECT_THROW(green_barrier(ModelSpace(3, 0.5), 1.0), DomainError);
}

TEST(BallVolume, Examples) {
  EXPECT_NEAR(model_ball_volume(ModelSpace(2, 0), 1.0, false), kPi, 1e-13);
  EXPECT_NEAR(model_ball_volume(ModelSpace(3, 0), 2.0, false), 32 * kPi / 3, 1e-12);
  EXPECT_NEAR(model_ball_volume(ModelSpace(3, -0.3), 1.2, false),
              4 * kPi * (std::sinh(2 * std::sqrt(0.3) * 1.2) / (4 * std::sqrt(0.3)) - 1.2 / 2) / 0.3,
              1e-12);
  // weighted: midpoint Riemann sum oracle
  ModelSpace M(3, -0.04, 0.5);
  const int N = 200000;
  double s = 0;
  for (int i = 0; i < N; ++i) {
    double x = (i + 0.5) / N;
    s += std::exp(0.5 * x) * std::pow(oracle_ell(-0.04, x), 2);
  }
  s *= 4 * kPi / N;
  EXPECT_NEAR(model_ball_volume(M, 1.0, true), s, 1e-8);
}

TEST(BallVolume, WeightedEquivalentNearZero) {
  ModelSpace M(3.5, -0.2, 1.3);
  for (double r : {1e-4, 1e-3, 5e-3, 1e-2}) {
    double q = model_ball_volume(M, r, true) / model_ball_volume(M, r, false);
    EXPECT_GE(q, 1.0);
    EXPECT_LE(q, 1 + 2 * M.weight_rate * r);
  }
}

TEST(GrowthH, Examples) {
  EXPECT_EQ(growth_function_h(2, 3, 0), 0.0);
  EXPECT_EQ(growth_hbar(0.0), 1.0);
  boost::math::quadrature::tanh_sinh<double> ts;
  double q = ts.integrate(hbar_oracle, 0.0, 1.0);
  EXPECT_NEAR(growth_function_h(2, 3, 1), q, 1e-8);
  for (double x : {1e-3, 0.02, 0.5, 3.0, 12.0})
    EXPECT_NEAR(growth_function_h(1.5, 0.7, x),
                std::max(0.7 / 3, 0.49 / 13.5) * ts.integrate(hbar_oracle, 0.0, x), 1e-9);
  for (double t : {1e-4, 5e-3, 0.0099, 0.0101, 0.3})
    EXPECT_NEAR(growth_hbar(t), hbar_oracle(t), 1e-12);
}

TEST(GrowthH, Nondecreasing) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 20);
  for (int i = 0; i < 500; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    EXPECT_LE(growth_function_h(0.8, 2.0, a), growth_function_h(0.8, 2.0, b));
  }
}

TEST(BishopGromov, ExactPolynomialOracle) {
  // int_0^R (p+1)^2 p dp = R^4/4 + 2R^3/3 + R^2/2
  auto F = [](double R) { return R * R * R * R / 4 + 2 * R * R * R / 3 + R * R / 2; };
  EXPECT_NEAR(F(2.0) / F(1.0), 8.0, 1e-15);
  EXPECT_NEAR(bishop_gromov_ratio_bound(2, 2, 0, 0, 0, 1, 2), F(2.0) / F(1.0), 1e-11);
  EXPECT_NEAR(bishop_gromov_ratio_bound(2, 2, 0, 0, 0.7, 1, 2), std::exp(0.7) * 8.0, 1e-10);
}

TEST(BishopGromov, ClassicalLimitAndMonotone) {
  for (int n : {1, 2, 3, 5})
    EXPECT_NEAR(bishop_gromov_ratio_bound(n, 1e-10, 0, 0, 0, 0.7, 2.3), std::pow(2.3 / 0.7, n),
                1e-7 * std::pow(2.3 / 0.7, n));
  double prev = 0;
  for (double r2 = 1.1; r2 < 30; r2 *= 1.3) {
    double v = bishop_gromov_ratio_bound(3, 2, 0.05, 1.0, 2.0, 1.0, r2);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(ModelSpace, RuntimeBudget) {
  auto t0 = std::chrono::steady_clock::now();
  auto gb = green_barrier(ModelSpace(3, 0), 1.0);
  double acc = 0;
  for (double rho = 0.05; rho <= 1; rho += 1e-4) acc += gb.value(rho);
  for (double rho = 0.01; rho < 10; rho += 1e-3)
    acc += ell(ModelSpace(3, -0.5), rho) + model_mean_curvature(ModelSpace(3, -0.5), rho);
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_TRUE(std::isfinite(acc));
  EXPECT_LT(dt, 1.0);
}
