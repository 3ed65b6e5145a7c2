#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "belab/errors.hpp"

namespace belab {

template <int N> using Vec = Eigen::Matrix<double, N, 1>;
template <int N> using Mat = Eigen::Matrix<double, N, N>;

// A point of an atlas with at most two charts.
template <int N>
struct Point {
  int chart = 0;
  Vec<N> x = Vec<N>::Zero();

  Point() = default;
  Point(const Vec<N>& x_, int chart_ = 0) : chart(chart_), x(x_) {}
};

template <int N>
struct MetricJet {
  Mat<N> g;
  std::array<Mat<N>, N> dg;                  // dg[k] = d_k g
  std::array<std::array<Mat<N>, N>, N> ddg;  // ddg[k][l] = d_k d_l g
};

// G[k](i, j) = Gamma^k_ij
template <int N>
struct Christoffel {
  std::array<Mat<N>, N> G;
};

// dG[m][k](i, j) = d_m Gamma^k_ij
template <int N>
using ChristoffelDerivative = std::array<std::array<Mat<N>, N>, N>;

// Coordinate change from one chart to the other.
template <int N>
struct Transition {
  std::function<Vec<N>(const Vec<N>&)> map;
  std::function<Mat<N>(const Vec<N>&)> jacobian;                // J(i, j) = d phi^i / d x^j
  std::function<std::array<Mat<N>, N>(const Vec<N>&)> hessian;  // H[i](j, k)
};

template <int N>
struct Chart {
  Vec<N> lo = Vec<N>::Zero();
  Vec<N> hi = Vec<N>::Ones();
  std::array<bool, N> periodic{};
  std::function<Mat<N>(const Vec<N>&)> metric;
  std::function<void(const Vec<N>&, int, MetricJet<N>&)> metric_jet;  // optional closed form
  std::function<Vec<N>(const Vec<N>&)> X;                            // covector
  std::function<Mat<N>(const Vec<N>&)> X_jacobian;                   // optional, (i, j) = d_i X_j
  std::function<Mat<N>(const Vec<N>&)> ricci_closed_form;            // optional oracle
  std::function<bool(const Vec<N>&)> owns;  // preferred region in a two-chart atlas

  Vec<N> extent() const { return hi - lo; }
  bool prefers(const Vec<N>& x) const { return !owns || owns(x); }
};

enum class DerivativeMode { ClosedForm, FiniteDifference };

struct DerivativeSettings {
  DerivativeMode mode = DerivativeMode::ClosedForm;
  double step = 1e-4;  // relative to the chart extent along each axis
  bool richardson = false;
};

template <int N>
class ChartManifold {
 public:
  static constexpr int dim = N;

  std::string name;
  std::vector<Chart<N>> charts;
  std::vector<Transition<N>> transitions;  // transitions[c] maps chart c to chart 1 - c
  std::vector<int> transition_axes;        // axes moved by the chart transition
  DerivativeSettings derivatives;

  int chart_count() const { return static_cast<int>(charts.size()); }
  const Chart<N>& chart(int c) const { return charts.at(static_cast<std::size_t>(c)); }
  bool closed_form() const { return derivatives.mode == DerivativeMode::ClosedForm; }

  bool compact() const {
    if (chart_count() == 2) {
      for (int k = 0; k < N; ++k)
        if (!chart(0).periodic[k] && !is_transition_axis(k)) return false;
      return true;
    }
    for (int k = 0; k < N; ++k)
      if (!chart(0).periodic[k]) return false;
    return true;
  }

  Mat<N> metric(const Point<N>& p) const { return chart(p.chart).metric(p.x); }

  Vec<N> X(const Point<N>& p) const {
    const auto& c = chart(p.chart);
    return c.X ? c.X(p.x) : Vec<N>::Zero();
  }

  // (i, j) = d_i X_j
  Mat<N> X_jacobian(const Point<N>& p) const {
    const auto& c = chart(p.chart);
    if (!c.X) return Mat<N>::Zero();
    if (closed_form() && c.X_jacobian) return c.X_jacobian(p.x);
    Mat<N> J;
    const auto h = steps(p.chart);
    for (int i = 0; i < N; ++i) {
      auto d = [&](double s) {
        Vec<N> a = p.x, b = p.x;
        a[i] += s;
        b[i] -= s;
        return Vec<N>((c.X(a) - c.X(b)) / (2.0 * s));
      };
      Vec<N> row = derivatives.richardson ? Vec<N>((4.0 * d(0.5 * h[i]) - d(h[i])) / 3.0) : d(h[i]);
      J.row(i) = row.transpose();
    }
    return J;
  }

  MetricJet<N> jet(const Point<N>& p, int order) const {
    const auto& c = chart(p.chart);
    MetricJet<N> J;
    if (closed_form() && c.metric_jet) {
      c.metric_jet(p.x, order, J);
      return J;
    }
    J.g = c.metric(p.x);
    if (order < 1) return J;
    const auto h = steps(p.chart);
    auto first = [&](int k, double s) {
      Vec<N> a = p.x, b = p.x;
      a[k] += s;
      b[k] -= s;
      return Mat<N>((c.metric(a) - c.metric(b)) / (2.0 * s));
    };
    for (int k = 0; k < N; ++k)
      J.dg[k] = derivatives.richardson ? Mat<N>((4.0 * first(k, 0.5 * h[k]) - first(k, h[k])) / 3.0)
                                       : first(k, h[k]);
    if (order < 2) return J;
    auto second = [&](int k, int l, double sk, double sl) {
      if (k == l) {
        Vec<N> a = p.x, b = p.x;
        a[k] += sk;
        b[k] -= sk;
        return Mat<N>((c.metric(a) - 2.0 * J.g + c.metric(b)) / (sk * sk));
      }
      Vec<N> pp = p.x, pm = p.x, mp = p.x, mm = p.x;
      pp[k] += sk; pp[l] += sl;
      pm[k] += sk; pm[l] -= sl;
      mp[k] -= sk; mp[l] += sl;
      mm[k] -= sk; mm[l] -= sl;
      return Mat<N>((c.metric(pp) - c.metric(pm) - c.metric(mp) + c.metric(mm)) / (4.0 * sk * sl));
    };
    // second derivatives use a larger step to balance truncation and roundoff
    for (int k = 0; k < N; ++k)
      for (int l = k; l < N; ++l) {
        const double sk = 2.0 * h[k], sl = 2.0 * h[l];
        Mat<N> v = derivatives.richardson
                       ? Mat<N>((4.0 * second(k, l, 0.5 * sk, 0.5 * sl) - second(k, l, sk, sl)) / 3.0)
                       : second(k, l, sk, sl);
        J.ddg[k][l] = v;
        J.ddg[l][k] = v;
      }
    return J;
  }

  // Periodic axes wrapped into [lo, hi).
  Point<N> wrap(Point<N> p) const {
    const auto& c = chart(p.chart);
    for (int k = 0; k < N; ++k) {
      if (!c.periodic[k]) continue;
      const double L = c.hi[k] - c.lo[k];
      p.x[k] = c.lo[k] + std::fmod(std::fmod(p.x[k] - c.lo[k], L) + L, L);
      if (p.x[k] >= c.hi[k]) p.x[k] = c.lo[k];
    }
    return p;
  }

  Point<N> to_chart(const Point<N>& p, int target) const {
    if (p.chart == target) return p;
    if (chart_count() != 2) throw DomainError("to_chart: single-chart manifold");
    return Point<N>(transitions[static_cast<std::size_t>(p.chart)].map(p.x), target);
  }

  // Wrapped, and moved to the other chart if outside its preferred region.
  Point<N> canonical(Point<N> p) const {
    p = wrap(p);
    if (chart_count() == 2 && !chart(p.chart).prefers(p.x)) p = wrap(to_chart(p, 1 - p.chart));
    return p;
  }

  bool inside(const Point<N>& p) const {
    const auto& c = chart(p.chart);
    for (int k = 0; k < N; ++k) {
      if (c.periodic[k]) continue;
      if (!(p.x[k] >= c.lo[k] && p.x[k] <= c.hi[k])) return false;
    }
    return p.x.allFinite();
  }

  // Replace X (given in chart 0); the second chart receives the pullback.
  void set_X(std::function<Vec<N>(const Vec<N>&)> X0,
             std::function<Mat<N>(const Vec<N>&)> dX0 = {}) {
    charts[0].X = std::move(X0);
    charts[0].X_jacobian = std::move(dX0);
    if (chart_count() == 2) {
      const auto back = transitions[1];
      const auto X0c = charts[0].X;
      charts[1].X = [back, X0c](const Vec<N>& y) -> Vec<N> {
        return back.jacobian(y).transpose() * X0c(back.map(y));
      };
      charts[1].X_jacobian = {};
      const auto dX0c = charts[0].X_jacobian;
      if (dX0c && back.hessian) {
        // d_i (J^T X0(phi))_j = H[a](j, i) X0_a + J(a, j) dX0(b, a) J(b, i)
        charts[1].X_jacobian = [back, X0c, dX0c](const Vec<N>& y) -> Mat<N> {
          const Vec<N> x = back.map(y);
          const Vec<N> X = X0c(x);
          const Mat<N> J = back.jacobian(y);
          const auto H = back.hessian(y);
          Mat<N> out = J.transpose() * dX0c(x) * J;
          for (int a = 0; a < N; ++a) out += X[a] * H[static_cast<std::size_t>(a)].transpose();
          return out;
        };
      }
    }
  }

  ChartManifold with_negated_X() const {
    ChartManifold out = *this;
    for (auto& c : out.charts) {
      if (c.X) {
        auto f = c.X;
        c.X = [f](const Vec<N>& x) -> Vec<N> { return -f(x); };
      }
      if (c.X_jacobian) {
        auto f = c.X_jacobian;
        c.X_jacobian = [f](const Vec<N>& x) -> Mat<N> { return -f(x); };
      }
    }
    return out;
  }

  Vec<N> steps(int c) const {
    Vec<N> e = chart(c).extent();
    Vec<N> h;
    for (int k = 0; k < N; ++k) h[k] = derivatives.step * e[k];
    return h;
  }

  bool is_transition_axis(int k) const {
    for (int a : transition_axes)
      if (a == k) return true;
    return false;
  }
};

namespace detail {

template <int N>
Christoffel<N> christoffel_from_jet(const MetricJet<N>& J, const Mat<N>& ginv) {
  Christoffel<N> C;
  // lowered: Gamma_{l i j} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
  for (int k = 0; k < N; ++k) C.G[k].setZero();
  for (int i = 0; i < N; ++i)
    for (int j = i; j < N; ++j) {
      Vec<N> low;
      for (int l = 0; l < N; ++l) low[l] = 0.5 * (J.dg[i](j, l) + J.dg[j](i, l) - J.dg[l](i, j));
      Vec<N> up = ginv * low;
      for (int k = 0; k < N; ++k) {
        C.G[k](i, j) = up[k];
        C.G[k](j, i) = up[k];
      }
    }
  return C;
}

template <int N>
ChristoffelDerivative<N> christoffel_derivative_from_jet(const MetricJet<N>& J, const Mat<N>& ginv) {
  ChristoffelDerivative<N> D;
  for (int m = 0; m < N; ++m) {
    const Mat<N> dginv = -ginv * J.dg[m] * ginv;
    for (int k = 0; k < N; ++k) D[m][k].setZero();
    for (int i = 0; i < N; ++i)
      for (int j = i; j < N; ++j) {
        Vec<N> low, dlow;
        for (int l = 0; l < N; ++l) {
          low[l] = 0.5 * (J.dg[i](j, l) + J.dg[j](i, l) - J.dg[l](i, j));
          dlow[l] = 0.5 * (J.ddg[m][i](j, l) + J.ddg[m][j](i, l) - J.ddg[m][l](i, j));
        }
        Vec<N> v = dginv * low + ginv * dlow;
        for (int k = 0; k < N; ++k) {
          D[m][k](i, j) = v[k];
          D[m][k](j, i) = v[k];
        }
      }
  }
  return D;
}

// R_jk = d_i G^i_jk - d_j G^i_ik + G^i_im G^m_jk - G^i_jm G^m_ik
template <int N>
Mat<N> ricci_from(const Christoffel<N>& C, const ChristoffelDerivative<N>& D) {
  Mat<N> R = Mat<N>::Zero();
  for (int j = 0; j < N; ++j)
    for (int k = 0; k < N; ++k) {
      double s = 0.0;
      for (int i = 0; i < N; ++i) {
        s += D[i][i](j, k) - D[j][i](i, k);
        for (int m = 0; m < N; ++m) s += C.G[i](i, m) * C.G[m](j, k) - C.G[i](j, m) * C.G[m](i, k);
      }
      R(j, k) = s;
    }
  return R;
}

template <int N>
Mat<N> checked_inverse(const Mat<N>& g) {
  Eigen::LLT<Mat<N>> llt(g);
  if (llt.info() != Eigen::Success) throw DomainError("singular or indefinite metric");
  return llt.solve(Mat<N>::Identity());
}

// Smallest eigenvalue of A relative to g.
template <int N>
double min_generalized_eigenvalue(const Mat<N>& A, const Mat<N>& g) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat<N>> es(0.5 * (A + A.transpose()), g);
  return es.eigenvalues().minCoeff();
}

}  // namespace detail

template <int N>
Christoffel<N> christoffel(const ChartManifold<N>& M, const Point<N>& p) {
  const auto J = M.jet(p, 1);
  return detail::christoffel_from_jet(J, detail::checked_inverse<N>(J.g));
}

template <int N>
Mat<N> ricci(const ChartManifold<N>& M, const Point<N>& p) {
  const auto J = M.jet(p, 2);
  const Mat<N> ginv = detail::checked_inverse<N>(J.g);
  const auto C = detail::christoffel_from_jet(J, ginv);
  const auto D = detail::christoffel_derivative_from_jet(J, ginv);
  return detail::ricci_from<N>(C, D);
}

// (i, j) = nabla_i X_j
template <int N>
Mat<N> covariant_derivative_X(const ChartManifold<N>& M, const Point<N>& p) {
  const auto C = christoffel(M, p);
  const Vec<N> X = M.X(p);
  Mat<N> D = M.X_jacobian(p);
  for (int k = 0; k < N; ++k) D -= C.G[k] * X[k];
  return D;
}

template <int N>
Mat<N> lie_derivative_metric(const ChartManifold<N>& M, const Point<N>& p) {
  const Mat<N> D = covariant_derivative_X(M, p);
  return D + D.transpose();
}

template <int N>
double divergence_X(const ChartManifold<N>& M, const Point<N>& p) {
  const Mat<N> ginv = detail::checked_inverse<N>(M.metric(p));
  return (ginv.cwiseProduct(covariant_derivative_X(M, p))).sum();
}

template <int N>
Mat<N> bakry_emery_tensor(const ChartManifold<N>& M, double m, const Point<N>& p) {
  if (!(m > 0.0)) throw DomainError("bakry_emery_tensor: m must be > 0");
  const Vec<N> X = M.X(p);
  return ricci(M, p) + 0.5 * lie_derivative_metric(M, p) - X * X.transpose() / m;
}

template <int N>
double covector_norm(const ChartManifold<N>& M, const Point<N>& p, const Vec<N>& w) {
  return std::sqrt(w.dot(M.metric(p).ldlt().solve(w)));
}

template <int N>
double vector_norm(const ChartManifold<N>& M, const Point<N>& p, const Vec<N>& v) {
  return std::sqrt(v.dot(M.metric(p) * v));
}

// Regular sample grid over each chart's preferred region (interior points only
// along non-periodic axes).
template <int N>
std::vector<Point<N>> sample_grid(const ChartManifold<N>& M, int per_axis) {
  std::vector<Point<N>> pts;
  for (int c = 0; c < M.chart_count(); ++c) {
    const auto& ch = M.chart(c);
    std::array<int, N> idx{};
    for (;;) {
      Vec<N> x;
      for (int k = 0; k < N; ++k) {
        const double t = ch.periodic[k] ? static_cast<double>(idx[k]) / per_axis
                                        : (idx[k] + 0.5) / per_axis;
        x[k] = ch.lo[k] + t * (ch.hi[k] - ch.lo[k]);
      }
      if (ch.prefers(x)) pts.emplace_back(x, c);
      int k = 0;
      while (k < N && ++idx[k] == per_axis) idx[k++] = 0;
      if (k == N) break;
    }
  }
  return pts;
}

template <int N>
double curvature_bound_deficit(const ChartManifold<N>& M, double m, double delta,
                               const std::vector<Point<N>>& grid) {
  if (grid.empty()) throw DomainError("curvature_bound_deficit: empty grid");
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& p : grid) {
    const Mat<N> g = M.metric(p);
    const Mat<N> T = bakry_emery_tensor(M, m, p) + (N - 1) * delta * g;
    worst = std::min(worst, detail::min_generalized_eigenvalue<N>(T, g));
  }
  return worst;
}

// Smallest delta >= 0 with Ric_X^m >= -(n-1) delta g on the grid.
template <int N>
double required_delta(const ChartManifold<N>& M, double m, const std::vector<Point<N>>& grid) {
  return std::max(0.0, -curvature_bound_deficit(M, m, 0.0, grid)) / (N - 1);
}

template <int N>
double sup_X_norm(const ChartManifold<N>& M, const std::vector<Point<N>>& grid) {
  double s = 0.0;
  for (const auto& p : grid) s = std::max(s, covector_norm(M, p, M.X(p)));
  return s;
}

// Checks positive definiteness and agreement across periodic faces.
template <int N>
void validate_manifold(const ChartManifold<N>& M, int per_axis = 8, double tol = 1e-12) {
  for (const auto& p : sample_grid(M, per_axis)) {
    const Mat<N> g = M.metric(p);
    if (!g.allFinite() || (g - g.transpose()).cwiseAbs().maxCoeff() > tol * (1 + g.norm()))
      throw ConfigError(M.name + ": metric not symmetric at a sample point");
    if (Eigen::SelfAdjointEigenSolver<Mat<N>>(g).eigenvalues().minCoeff() <= 0.0)
      throw ConfigError(M.name + ": metric not positive definite at a sample point");
    if (!M.X(p).allFinite()) throw ConfigError(M.name + ": X not finite at a sample point");
    const auto& ch = M.chart(p.chart);
    for (int k = 0; k < N; ++k) {
      if (!ch.periodic[k]) continue;
      Vec<N> a = p.x, b = p.x;
      a[k] = ch.lo[k];
      b[k] = ch.hi[k];
      const double gs = 1.0 + ch.metric(a).norm();
      if ((ch.metric(a) - ch.metric(b)).norm() > tol * gs)
        throw ConfigError(M.name + ": metric differs across periodic axis " + std::to_string(k));
      if (ch.X && (ch.X(a) - ch.X(b)).norm() > tol * (1.0 + ch.X(a).norm()))
        throw ConfigError(M.name + ": X differs across periodic axis " + std::to_string(k));
    }
  }
}

}  // namespace belab
