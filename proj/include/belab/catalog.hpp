#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "belab/geometry.hpp"
#include "belab/numerics.hpp"

namespace belab {

// Covector fields in chart-0 coordinates, with optional closed-form jacobian.
template <int N>
struct CovectorField {
  std::function<Vec<N>(const Vec<N>&)> value;
  std::function<Mat<N>(const Vec<N>&)> jacobian;  // (i, j) = d_i X_j

  static CovectorField zero() { return {}; }

  static CovectorField constant(const Vec<N>& c) {
    return {[c](const Vec<N>&) -> Vec<N> { return c; },
            [](const Vec<N>&) -> Mat<N> { return Mat<N>::Zero(); }};
  }
};

template <int N>
void apply_field(ChartManifold<N>& M, const CovectorField<N>& X) {
  if (X.value) M.set_X(X.value, X.jacobian);
}

namespace detail {

template <int N>
void constant_metric_jet(const Mat<N>& g, int, MetricJet<N>& J) {
  J.g = g;
  for (int k = 0; k < N; ++k) {
    J.dg[k].setZero();
    for (int l = 0; l < N; ++l) J.ddg[k][l].setZero();
  }
}

// Inversion x -> x / |x|^2 acting on the coordinate pair (a, a+1).
template <int N>
Transition<N> inversion(int a) {
  Transition<N> t;
  t.map = [a](const Vec<N>& x) -> Vec<N> {
    Vec<N> y = x;
    const double r2 = x[a] * x[a] + x[a + 1] * x[a + 1];
    y[a] = x[a] / r2;
    y[a + 1] = x[a + 1] / r2;
    return y;
  };
  t.jacobian = [a](const Vec<N>& x) -> Mat<N> {
    Mat<N> J = Mat<N>::Identity();
    const double r2 = x[a] * x[a] + x[a + 1] * x[a + 1];
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        J(a + i, a + j) = (i == j ? 1.0 / r2 : 0.0) - 2.0 * x[a + i] * x[a + j] / (r2 * r2);
    return J;
  };
  t.hessian = [a](const Vec<N>& x) -> std::array<Mat<N>, N> {
    std::array<Mat<N>, N> H;
    for (auto& h : H) h.setZero();
    const double r2 = x[a] * x[a] + x[a + 1] * x[a + 1];
    const double r4 = r2 * r2, r6 = r4 * r2;
    auto d = [](int p, int q) { return p == q ? 1.0 : 0.0; };
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
          const double xi = x[a + i], xj = x[a + j], xk = x[a + k];
          H[a + i](a + j, a + k) =
              -2.0 * (d(i, j) * xk + d(i, k) * xj + d(j, k) * xi) / r4 + 8.0 * xi * xj * xk / r6;
        }
    return H;
  };
  return t;
}

// Conformal factor 4 / (1 + |x|^2)^2 of the stereographic unit sphere, on pair (a, a+1).
struct StereoFactor {
  int a = 0;
  template <int N>
  double value(const Vec<N>& x) const {
    const double s = 1.0 + x[a] * x[a] + x[a + 1] * x[a + 1];
    return 4.0 / (s * s);
  }
  template <int N>
  Vec<N> gradient(const Vec<N>& x) const {
    const double s = 1.0 + x[a] * x[a] + x[a + 1] * x[a + 1];
    Vec<N> g = Vec<N>::Zero();
    g[a] = -16.0 * x[a] / (s * s * s);
    g[a + 1] = -16.0 * x[a + 1] / (s * s * s);
    return g;
  }
  template <int N>
  Mat<N> hessian(const Vec<N>& x) const {
    const double s = 1.0 + x[a] * x[a] + x[a + 1] * x[a + 1];
    Mat<N> H = Mat<N>::Zero();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        H(a + i, a + j) = (i == j ? -16.0 / (s * s * s) : 0.0) +
                          96.0 * x[a + i] * x[a + j] / (s * s * s * s);
    return H;
  }
};

}  // namespace detail

namespace catalog {

inline constexpr double two_pi = 2.0 * num::pi;

template <int N>
ChartManifold<N> flat_torus(const CovectorField<N>& X = {}) {
  ChartManifold<N> M;
  M.name = "flat-torus";
  Chart<N> c;
  c.lo = Vec<N>::Zero();
  c.hi = Vec<N>::Constant(two_pi);
  c.periodic.fill(true);
  c.metric = [](const Vec<N>&) -> Mat<N> { return Mat<N>::Identity(); };
  c.metric_jet = [](const Vec<N>&, int order, MetricJet<N>& J) {
    detail::constant_metric_jet<N>(Mat<N>::Identity(), order, J);
  };
  c.ricci_closed_form = [](const Vec<N>&) -> Mat<N> { return Mat<N>::Zero(); };
  M.charts.push_back(c);
  apply_field(M, X);
  return M;
}

// R x S^1(radius) with coordinates (x, theta), x in [-half_length, half_length].
inline ChartManifold<2> cylinder(double radius = 1.0, double half_length = 20.0,
                                 const CovectorField<2>& X = {}) {
  ChartManifold<2> M;
  M.name = "cylinder";
  Chart<2> c;
  c.lo = Vec<2>(-half_length, 0.0);
  c.hi = Vec<2>(half_length, two_pi);
  c.periodic = {false, true};
  const Mat<2> g = Vec<2>(1.0, radius * radius).asDiagonal();
  c.metric = [g](const Vec<2>&) -> Mat<2> { return g; };
  c.metric_jet = [g](const Vec<2>&, int order, MetricJet<2>& J) {
    detail::constant_metric_jet<2>(g, order, J);
  };
  c.ricci_closed_form = [](const Vec<2>&) -> Mat<2> { return Mat<2>::Zero(); };
  M.charts.push_back(c);
  apply_field(M, X);
  return M;
}

// dx^2 + f(x)^2 dtheta^2 with f = 1 + amplitude * sin(wavenumber * x).
inline ChartManifold<2> warped_product(double amplitude = 0.01, double wavenumber = 1.0,
                                       double half_length = 20.0,
                                       const CovectorField<2>& X = {}) {
  if (!(std::abs(amplitude) < 1.0)) throw DomainError("warped_product: |amplitude| must be < 1");
  ChartManifold<2> M;
  M.name = "warped-product";
  Chart<2> c;
  c.lo = Vec<2>(-half_length, 0.0);
  c.hi = Vec<2>(half_length, two_pi);
  c.periodic = {false, true};
  const double a = amplitude, k = wavenumber;
  c.metric = [a, k](const Vec<2>& x) -> Mat<2> {
    const double f = 1.0 + a * std::sin(k * x[0]);
    return Vec<2>(1.0, f * f).asDiagonal();
  };
  c.metric_jet = [a, k](const Vec<2>& x, int order, MetricJet<2>& J) {
    const double s = std::sin(k * x[0]), co = std::cos(k * x[0]);
    const double f = 1.0 + a * s, f1 = a * k * co, f2 = -a * k * k * s;
    J.g = Vec<2>(1.0, f * f).asDiagonal();
    for (int i = 0; i < 2; ++i) {
      J.dg[i].setZero();
      for (int j = 0; j < 2; ++j) J.ddg[i][j].setZero();
    }
    if (order >= 1) J.dg[0](1, 1) = 2.0 * f * f1;
    if (order >= 2) J.ddg[0][0](1, 1) = 2.0 * (f1 * f1 + f * f2);
  };
  c.ricci_closed_form = [a, k](const Vec<2>& x) -> Mat<2> {
    const double s = std::sin(k * x[0]);
    const double f = 1.0 + a * s;
    const double K = a * k * k * s / f;  // -f''/f
    return K * Mat<2>(Vec<2>(1.0, f * f).asDiagonal());
  };
  M.charts.push_back(c);
  apply_field(M, X);
  return M;
}

// Unit S^2 as two stereographic charts glued along the equator |x| = 1.
inline ChartManifold<2> round_sphere(const CovectorField<2>& X = {}) {
  ChartManifold<2> M;
  M.name = "round-sphere";
  const detail::StereoFactor sf{0};
  for (int ci = 0; ci < 2; ++ci) {
    Chart<2> c;
    c.lo = Vec<2>::Constant(-4.0);
    c.hi = Vec<2>::Constant(4.0);
    c.periodic = {false, false};
    c.metric = [sf](const Vec<2>& x) -> Mat<2> {
      return sf.value<2>(x) * Mat<2>::Identity();
    };
    c.metric_jet = [sf](const Vec<2>& x, int order, MetricJet<2>& J) {
      J.g = sf.value<2>(x) * Mat<2>::Identity();
      if (order < 1) return;
      const Vec<2> g1 = sf.gradient<2>(x);
      for (int k = 0; k < 2; ++k) J.dg[k] = g1[k] * Mat<2>::Identity();
      if (order < 2) return;
      const Mat<2> H = sf.hessian<2>(x);
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) J.ddg[k][l] = H(k, l) * Mat<2>::Identity();
    };
    c.ricci_closed_form = [sf](const Vec<2>& x) -> Mat<2> {
      return sf.value<2>(x) * Mat<2>::Identity();
    };
    c.owns = [](const Vec<2>& x) { return x.squaredNorm() <= 1.2 * 1.2; };
    M.charts.push_back(c);
    M.transitions.push_back(detail::inversion<2>(0));
  }
  M.transition_axes = {0, 1};
  apply_field(M, X);
  return M;
}

// S^1(radius) x unit S^2 with coordinates (psi, u, v), (u, v) stereographic.
inline ChartManifold<3> s1xs2(double radius = 1.0, const CovectorField<3>& X = {}) {
  ChartManifold<3> M;
  M.name = "s1xs2";
  const detail::StereoFactor sf{1};
  const double R2 = radius * radius;
  for (int ci = 0; ci < 2; ++ci) {
    Chart<3> c;
    c.lo = Vec<3>(0.0, -4.0, -4.0);
    c.hi = Vec<3>(two_pi, 4.0, 4.0);
    c.periodic = {true, false, false};
    c.metric = [sf, R2](const Vec<3>& x) -> Mat<3> {
      const double s = sf.value<3>(x);
      return Vec<3>(R2, s, s).asDiagonal();
    };
    c.metric_jet = [sf, R2](const Vec<3>& x, int order, MetricJet<3>& J) {
      const double s = sf.value<3>(x);
      J.g = Vec<3>(R2, s, s).asDiagonal();
      const Mat<3> P = Vec<3>(0.0, 1.0, 1.0).asDiagonal();
      if (order < 1) return;
      const Vec<3> g1 = sf.gradient<3>(x);
      for (int k = 0; k < 3; ++k) J.dg[k] = g1[k] * P;
      if (order < 2) return;
      const Mat<3> H = sf.hessian<3>(x);
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) J.ddg[k][l] = H(k, l) * P;
    };
    c.ricci_closed_form = [sf](const Vec<3>& x) -> Mat<3> {
      const double s = sf.value<3>(x);
      return Vec<3>(0.0, s, s).asDiagonal();
    };
    c.owns = [](const Vec<3>& x) { return x[1] * x[1] + x[2] * x[2] <= 1.2 * 1.2; };
    M.charts.push_back(c);
    M.transitions.push_back(detail::inversion<3>(1));
  }
  M.transition_axes = {1, 2};
  apply_field(M, X);
  return M;
}

// Rotation about the projection axis, scaled by c: the vector c (-y, x) lowered by g.
inline CovectorField<2> sphere_rotation(double c) {
  const detail::StereoFactor sf{0};
  CovectorField<2> F;
  F.value = [sf, c](const Vec<2>& x) -> Vec<2> {
    return c * sf.value<2>(x) * Vec<2>(-x[1], x[0]);
  };
  F.jacobian = [sf, c](const Vec<2>& x) -> Mat<2> {
    const double s = sf.value<2>(x);
    const Vec<2> ds = sf.gradient<2>(x);
    Mat<2> J;
    for (int i = 0; i < 2; ++i) {
      J(i, 0) = -c * (ds[i] * x[1] + (i == 1 ? s : 0.0));
      J(i, 1) = c * (ds[i] * x[0] + (i == 0 ? s : 0.0));
    }
    return J;
  };
  return F;
}

// Height function cos(theta) = (|x|^2 - 1) / (|x|^2 + 1) in chart 0 (theta from the north pole).
inline double sphere_height(const Vec<2>& x) {
  const double r2 = x.squaredNorm();
  return (r2 - 1.0) / (r2 + 1.0);
}

}  // namespace catalog
}  // namespace belab
