#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <queue>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "belab/errors.hpp"
#include "belab/geometry.hpp"

namespace belab {

// Geodesic together with the derivatives of (x, v) with respect to the initial velocity.
template <int N>
struct FlowState {
  Point<N> p;
  Vec<N> v = Vec<N>::Zero();
  Mat<N> dx = Mat<N>::Zero();  // dx(i, a) = d x^i / d v0^a
  Mat<N> dv = Mat<N>::Identity();
};

enum class FlowStatus { Ok, Escaped };

namespace detail {

template <int N>
constexpr std::size_t flow_size = 2 * N + 2 * N * N;

template <int N>
using FlowArray = std::array<double, flow_size<N>>;

template <int N>
void pack(const FlowState<N>& s, FlowArray<N>& a) {
  for (int i = 0; i < N; ++i) {
    a[i] = s.p.x[i];
    a[N + i] = s.v[i];
    for (int j = 0; j < N; ++j) {
      a[2 * N + i * N + j] = s.dx(i, j);
      a[2 * N + N * N + i * N + j] = s.dv(i, j);
    }
  }
}

template <int N>
void unpack(const FlowArray<N>& a, FlowState<N>& s) {
  for (int i = 0; i < N; ++i) {
    s.p.x[i] = a[i];
    s.v[i] = a[N + i];
    for (int j = 0; j < N; ++j) {
      s.dx(i, j) = a[2 * N + i * N + j];
      s.dv(i, j) = a[2 * N + N * N + i * N + j];
    }
  }
}

template <int N>
void switch_chart(const ChartManifold<N>& M, FlowState<N>& s) {
  const auto& T = M.transitions[static_cast<std::size_t>(s.p.chart)];
  const Mat<N> J = T.jacobian(s.p.x);
  const auto H = T.hessian(s.p.x);
  Mat<N> dv = J * s.dv;
  for (int i = 0; i < N; ++i) dv.row(i) += (s.v.transpose() * H[static_cast<std::size_t>(i)] * s.dx);
  s.p = Point<N>(T.map(s.p.x), 1 - s.p.chart);
  s.v = J * s.v;
  s.dx = J * s.dx;
  s.dv = dv;
}

template <int N>
bool outside_box(const ChartManifold<N>& M, const Point<N>& p) {
  if (!p.x.allFinite()) return true;
  const auto& c = M.chart(p.chart);
  for (int k = 0; k < N; ++k) {
    if (c.periodic[k]) continue;
    if (M.chart_count() == 2 && M.is_transition_axis(k)) continue;
    if (p.x[k] < c.lo[k] || p.x[k] > c.hi[k]) return true;
  }
  return false;
}

inline double wrap_symmetric(double d, double L) {
  d = std::fmod(d, L);
  if (d > 0.5 * L) d -= L;
  if (d < -0.5 * L) d += L;
  return d;
}

// Coordinate displacement from a to b with periodic axes reduced to the nearest image.
template <int N>
Vec<N> displacement(const ChartManifold<N>& M, int chart, const Vec<N>& a, const Vec<N>& b) {
  const auto& c = M.chart(chart);
  Vec<N> d = b - a;
  for (int k = 0; k < N; ++k)
    if (c.periodic[k]) d[k] = wrap_symmetric(d[k], c.hi[k] - c.lo[k]);
  return d;
}

// Length of the coordinate segment a -> a + d (composite 5-point Gauss-Legendre).
template <int N>
double chord_length(const ChartManifold<N>& M, int chart, const Vec<N>& a, const Vec<N>& d, int pieces = 1) {
  static constexpr double xs[5] = {0.0469100770306680, 0.2307653449471585, 0.5,
                                   0.7692346550528415, 0.9530899229693320};
  static constexpr double ws[5] = {0.1184634425280945, 0.2393143352496832, 0.2844444444444444,
                                   0.2393143352496832, 0.1184634425280945};
  const auto& c = M.chart(chart);
  double s = 0.0;
  for (int piece = 0; piece < pieces; ++piece)
    for (int q = 0; q < 5; ++q) {
      const Vec<N> x = a + ((piece + xs[q]) / pieces) * d;
      s += ws[q] * std::sqrt(std::max(0.0, d.dot(c.metric(x) * d)));
    }
  return s / pieces;
}

}  // namespace detail

struct FlowSettings {
  double tolerance = 1e-11;
  std::size_t max_steps = 200000;
};

// Integrates the geodesic (and its variational system) on [0, T], switching charts
// between steps. obs(t, state) is called at each requested time in increasing order;
// on return s holds the state at T (or at the last time reached).
template <int N, class Observer>
FlowStatus integrate_flow(const ChartManifold<N>& M, FlowState<N>& s, double T, bool variational,
                          const std::vector<double>& times, Observer&& obs,
                          const FlowSettings& settings = {}) {
  namespace ode = boost::numeric::odeint;
  using State = detail::FlowArray<N>;
  if (T <= 0.0) {
    for (double t : times) obs(t, s);
    return FlowStatus::Ok;
  }
  int chart = s.p.chart;
  auto rhs = [&](const State& a, State& da, double) {
    Vec<N> x, v;
    for (int i = 0; i < N; ++i) {
      x[i] = a[i];
      v[i] = a[N + i];
    }
    const Point<N> p(x, chart);
    const auto J = M.jet(p, variational ? 2 : 1);
    const Mat<N> ginv = detail::checked_inverse<N>(J.g);
    const auto G = detail::christoffel_from_jet<N>(J, ginv);
    for (int k = 0; k < N; ++k) {
      da[k] = v[k];
      da[N + k] = -v.dot(G.G[k] * v);
    }
    if (!variational) {
      std::fill(da.begin() + 2 * N, da.end(), 0.0);
      return;
    }
    const auto D = detail::christoffel_derivative_from_jet<N>(J, ginv);
    for (int k = 0; k < N; ++k)
      for (int c = 0; c < N; ++c) {
        double acc = 0.0;
        for (int m = 0; m < N; ++m) acc -= v.dot(D[m][k] * v) * a[2 * N + m * N + c];
        Vec<N> dvc;
        for (int j = 0; j < N; ++j) dvc[j] = a[2 * N + N * N + j * N + c];
        acc -= 2.0 * v.dot(G.G[k] * dvc);
        da[2 * N + k * N + c] = a[2 * N + N * N + k * N + c];
        da[2 * N + N * N + k * N + c] = acc;
      }
  };

  auto stepper = ode::make_dense_output(settings.tolerance, settings.tolerance,
                                        ode::runge_kutta_dopri5<State>());
  State a;
  detail::pack(s, a);
  stepper.initialize(a, 0.0, 1e-2 * T);
  std::size_t next = 0, steps = 0;
  FlowState<N> tmp = s;
  while (stepper.current_time() < T) {
    stepper.do_step(rhs);
    if (++steps > settings.max_steps) throw SolverFailure("geodesic flow: step budget exhausted");
    const double now = std::min(stepper.current_time(), T);
    while (next < times.size() && times[next] <= now) {
      State b;
      stepper.calc_state(times[next], b);
      detail::unpack(b, tmp);
      tmp.p.chart = chart;
      obs(times[next], tmp);
      ++next;
    }
    State cur = stepper.current_state();
    if (stepper.current_time() >= T) stepper.calc_state(T, cur);
    detail::unpack(cur, tmp);
    tmp.p.chart = chart;
    if (detail::outside_box(M, tmp.p)) {
      s = tmp;
      return FlowStatus::Escaped;
    }
    if (M.chart_count() == 2 && !M.chart(chart).prefers(tmp.p.x)) {
      detail::switch_chart(M, tmp);
      chart = tmp.p.chart;
      detail::pack(tmp, cur);
      stepper.initialize(cur, stepper.current_time(), stepper.current_time_step());
    }
    if (stepper.current_time() >= T) {
      s = tmp;
      return FlowStatus::Ok;
    }
  }
  State fin = stepper.current_state();
  detail::unpack(fin, s);
  s.p.chart = chart;
  return FlowStatus::Ok;
}

template <int N>
struct GeodesicPath {
  std::vector<double> t;
  std::vector<Point<N>> points;  // chart-tagged; periodic axes left unwrapped
  std::vector<Vec<N>> velocities;
  double length = 0.0;
  bool unit_speed = false;
  double endpoint_residual = 0.0;
};

// Samples of the geodesic with initial data (p, v) on [0, T].
template <int N>
GeodesicPath<N> geodesic_path(const ChartManifold<N>& M, const Point<N>& p, const Vec<N>& v, double T,
                              int samples, const FlowSettings& settings = {}) {
  if (samples < 2) throw DomainError("geodesic_path: need at least 2 samples");
  GeodesicPath<N> out;
  std::vector<double> times(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) times[static_cast<std::size_t>(i)] = T * i / (samples - 1);
  FlowState<N> s;
  s.p = p;
  s.v = v;
  const auto status = integrate_flow(M, s, T, false, times, [&](double t, const FlowState<N>& st) {
    out.t.push_back(t);
    out.points.push_back(st.p);
    out.velocities.push_back(st.v);
  }, settings);
  if (status != FlowStatus::Ok) throw DomainError("geodesic_path: geodesic left the chart domain");
  const double speed = vector_norm(M, p, v);
  out.length = speed * T;
  out.unit_speed = std::abs(speed - 1.0) < 1e-9;
  return out;
}

// Integral of X along the path, by Simpson's rule on uniform samples (trapezoid if even count).
template <int N>
double line_integral_X(const ChartManifold<N>& M, const GeodesicPath<N>& gamma) {
  const std::size_t n = gamma.points.size();
  if (n < 2) return 0.0;
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = M.X(gamma.points[i]).dot(gamma.velocities[i]);
  const double h = gamma.t[1] - gamma.t[0];
  if (n % 2 == 1) {
    double s = f.front() + f.back();
    for (std::size_t i = 1; i + 1 < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f[i];
    return s * h / 3.0;
  }
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t i = 1; i + 1 < n; ++i) s += f[i];
  return s * h;
}

// Lattice of coordinate nodes with straight-chord edge weights, glued across charts.
template <int N>
class Lattice {
 public:
  struct Node {
    int chart;
    std::array<int, N> idx;
    Vec<N> x;
  };

  Lattice(const ChartManifold<N>& M, int target_nodes) : M_(&M) {
    build_stencil();
    const int charts = M.chart_count();
    grids_.resize(static_cast<std::size_t>(charts));
    double volume = 0.0;
    for (int c = 0; c < charts; ++c) {
      auto& G = grids_[static_cast<std::size_t>(c)];
      const auto& ch = M.chart(c);
      G.lo = ch.lo;
      G.hi = ch.hi;
      for (int k = 0; k < N; ++k)
        if (charts == 2 && M.is_transition_axis(k)) {
          G.lo[k] = -kGlueRadius;
          G.hi[k] = kGlueRadius;
        }
      double v = 1.0;
      for (int k = 0; k < N; ++k) v *= G.hi[k] - G.lo[k];
      volume += v;
    }
    const double h = std::pow(volume / std::max(16, target_nodes), 1.0 / N);
    for (int c = 0; c < charts; ++c) {
      auto& G = grids_[static_cast<std::size_t>(c)];
      const auto& ch = M.chart(c);
      std::size_t cells = 1;
      for (int k = 0; k < N; ++k) {
        const double e = G.hi[k] - G.lo[k];
        const int cnt = std::max(4, static_cast<int>(std::lround(e / h)));
        G.periodic[k] = ch.periodic[k];
        G.step[k] = e / cnt;
        G.count[k] = ch.periodic[k] ? cnt : cnt + 1;
        cells *= static_cast<std::size_t>(G.count[k]);
      }
      G.node_of.assign(cells, -1);
      std::array<int, N> idx{};
      for (std::size_t cell = 0; cell < cells; ++cell) {
        Vec<N> x;
        double r2 = 0.0;
        for (int k = 0; k < N; ++k) {
          x[k] = G.lo[k] + idx[k] * G.step[k];
          if (charts == 2 && M.is_transition_axis(k)) r2 += x[k] * x[k];
        }
        if (r2 <= kGlueRadius * kGlueRadius + 1e-12) {
          G.node_of[cell] = static_cast<int>(nodes_.size());
          nodes_.push_back({c, idx, x});
        }
        int k = 0;
        while (k < N && ++idx[k] == G.count[k]) idx[k++] = 0;
      }
    }
    const std::size_t S = stencil_.size();
    weights_.assign(nodes_.size() * S, std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < nodes_.size(); ++a)
      for (std::size_t s = 0; s < S; ++s) {
        const int b = neighbour(static_cast<int>(a), s);
        if (b < 0) continue;
        Vec<N> d;
        const auto& G = grids_[static_cast<std::size_t>(nodes_[a].chart)];
        for (int k = 0; k < N; ++k) d[k] = stencil_[s][k] * G.step[k];
        weights_[a * S + s] = detail::chord_length(M, nodes_[a].chart, nodes_[a].x, d);
      }
    if (charts == 2) glue();
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  // Nearest node in the point's own chart.
  int nearest(const Point<N>& p) const {
    const auto& G = grids_[static_cast<std::size_t>(p.chart)];
    std::array<int, N> idx;
    for (int k = 0; k < N; ++k) {
      long i = std::lround((p.x[k] - G.lo[k]) / G.step[k]);
      if (G.periodic[k]) i = ((i % G.count[k]) + G.count[k]) % G.count[k];
      else i = std::clamp<long>(i, 0, G.count[k] - 1);
      idx[k] = static_cast<int>(i);
    }
    const int n = G.node_of[G.cell(idx)];
    if (n >= 0) return n;
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].chart != p.chart) continue;
      const double d = detail::displacement(*M_, p.chart, p.x, nodes_[i].x).norm();
      if (d < bd) {
        bd = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  struct Tree {
    std::vector<double> dist;
    std::vector<int> pred;
  };

  Tree dijkstra(int source) const {
    Tree T;
    T.dist.assign(nodes_.size(), std::numeric_limits<double>::infinity());
    T.pred.assign(nodes_.size(), -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> q;
    T.dist[static_cast<std::size_t>(source)] = 0.0;
    q.push({0.0, source});
    const std::size_t S = stencil_.size();
    while (!q.empty()) {
      const auto [d, a] = q.top();
      q.pop();
      if (d > T.dist[static_cast<std::size_t>(a)]) continue;
      auto relax = [&](int b, double w) {
        const double nd = d + w;
        if (nd < T.dist[static_cast<std::size_t>(b)]) {
          T.dist[static_cast<std::size_t>(b)] = nd;
          T.pred[static_cast<std::size_t>(b)] = a;
          q.push({nd, b});
        }
      };
      for (std::size_t s = 0; s < S; ++s) {
        const double w = weights_[static_cast<std::size_t>(a) * S + s];
        if (std::isfinite(w)) relax(neighbour(a, s), w);
      }
      if (!glue_.empty())
        for (const auto& [b, w] : glue_[static_cast<std::size_t>(a)]) relax(b, w);
    }
    return T;
  }

 private:
  static constexpr double kGlueRadius = 1.3;

  struct Grid {
    Vec<N> lo, hi, step;
    std::array<int, N> count{};
    std::array<bool, N> periodic{};
    std::vector<int> node_of;
    std::size_t cell(const std::array<int, N>& idx) const {
      std::size_t c = 0;
      for (int k = N - 1; k >= 0; --k) c = c * static_cast<std::size_t>(count[k]) + static_cast<std::size_t>(idx[k]);
      return c;
    }
  };

  void build_stencil() {
    const int R = N == 2 ? 3 : 2;
    std::array<int, N> o;
    o.fill(-R);
    for (;;) {
      int g = 0;
      for (int k = 0; k < N; ++k) g = std::gcd(g, std::abs(o[k]));
      if (g == 1) stencil_.push_back(o);
      int k = 0;
      while (k < N && ++o[k] > R) o[k++] = -R;
      if (k == N) break;
    }
  }

  int neighbour(int a, std::size_t s) const {
    const auto& n = nodes_[static_cast<std::size_t>(a)];
    const auto& G = grids_[static_cast<std::size_t>(n.chart)];
    std::array<int, N> idx;
    for (int k = 0; k < N; ++k) {
      int i = n.idx[k] + stencil_[s][k];
      if (G.periodic[k]) i = ((i % G.count[k]) + G.count[k]) % G.count[k];
      else if (i < 0 || i >= G.count[k]) return -1;
      idx[k] = i;
    }
    return G.node_of[G.cell(idx)];
  }

  void glue() {
    glue_.resize(nodes_.size());
    for (std::size_t a = 0; a < nodes_.size(); ++a) {
      const auto& n = nodes_[a];
      double r2 = 0.0;
      for (int k = 0; k < N; ++k)
        if (M_->is_transition_axis(k)) r2 += n.x[k] * n.x[k];
      if (r2 < 0.7 * 0.7) continue;
      const int o = 1 - n.chart;
      const Vec<N> y = M_->transitions[static_cast<std::size_t>(n.chart)].map(n.x);
      const auto& G = grids_[static_cast<std::size_t>(o)];
      std::array<int, N> base;
      for (int k = 0; k < N; ++k) {
        if (M_->is_transition_axis(k)) base[k] = static_cast<int>(std::floor((y[k] - G.lo[k]) / G.step[k]));
        else base[k] = n.idx[k];
      }
      for (int corner = 0; corner < (1 << N); ++corner) {
        std::array<int, N> idx = base;
        bool ok = true;
        for (int k = 0; k < N; ++k) {
          if (M_->is_transition_axis(k)) idx[k] += (corner >> k) & 1;
          else if ((corner >> k) & 1) ok = false;
          if (idx[k] < 0 || idx[k] >= G.count[k]) ok = false;
        }
        if (!ok) continue;
        const int b = G.node_of[G.cell(idx)];
        if (b < 0) continue;
        const double w = detail::chord_length(*M_, o, y, Vec<N>(nodes_[static_cast<std::size_t>(b)].x - y));
        glue_[a].push_back({b, w});
        glue_[static_cast<std::size_t>(b)].push_back({static_cast<int>(a), w});
      }
    }
  }

  const ChartManifold<N>* M_;
  std::vector<Grid> grids_;
  std::vector<Node> nodes_;
  std::vector<std::array<int, N>> stencil_;
  std::vector<double> weights_;
  std::vector<std::vector<std::pair<int, double>>> glue_;
};

struct DistanceSettings {
  int lattice_nodes = 4096;
  double shooting_tolerance = 1e-10;
  int max_newton = 60;
  double newton_step_cap = 0.25;
  int chord_seeds = 4;
  std::size_t tree_cache = 1024;
  FlowSettings flow{};
};

template <int N>
struct ShotResult {
  bool converged = false;
  double length = std::numeric_limits<double>::infinity();
  Point<N> start;
  Vec<N> v0 = Vec<N>::Zero();
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

template <int N>
struct DistanceResult {
  double length = 0.0;       // refined geodesic length, or upper_bound when not refined
  double upper_bound = 0.0;  // min of chord and lattice path lengths
  bool refined = false;      // false: shooting did not beat the graph bound
  Point<N> start;
  Vec<N> v0 = Vec<N>::Zero();  // geodesic x(t), t in [0, 1], from start
  double residual = 0.0;
};

namespace detail {

template <int N>
bool end_in_chart(const ChartManifold<N>& M, FlowState<N>& s, int chart) {
  if (s.p.chart == chart) return true;
  if (M.chart_count() != 2) return false;
  const auto& T = M.transitions[static_cast<std::size_t>(s.p.chart)];
  const Mat<N> J = T.jacobian(s.p.x);
  s.dx = J * s.dx;
  s.p = Point<N>(T.map(s.p.x), chart);
  return s.p.x.allFinite();
}

}  // namespace detail

// Newton iteration on v0 for the two-point problem x(0) = start, x(1) = y.
template <int N>
ShotResult<N> shoot(const ChartManifold<N>& M, const Point<N>& start, const Point<N>& y, Vec<N> v0,
                    const DistanceSettings& settings = {}) {
  ShotResult<N> r;
  r.start = start;
  auto residual = [&](const Vec<N>& v, Vec<N>& F, Mat<N>& Jac) -> bool {
    FlowState<N> s;
    s.p = start;
    s.v = v;
    s.dx.setZero();
    s.dv.setIdentity();
    try {
      if (integrate_flow(M, s, 1.0, true, {}, [](double, const FlowState<N>&) {}, settings.flow) !=
          FlowStatus::Ok)
        return false;
    } catch (const std::exception&) {
      return false;
    }
    if (!detail::end_in_chart(M, s, y.chart)) return false;
    F = detail::displacement(M, y.chart, y.x, s.p.x);
    Jac = s.dx;
    return F.allFinite() && Jac.allFinite();
  };
  Vec<N> F;
  Mat<N> Jac;
  if (!residual(v0, F, Jac)) return r;
  double norm = F.template lpNorm<Eigen::Infinity>();
  const double tol = settings.shooting_tolerance * (1.0 + y.x.template lpNorm<Eigen::Infinity>());
  for (int it = 0; it < settings.max_newton && norm > tol; ++it) {
    r.iterations = it + 1;
    Eigen::FullPivLU<Mat<N>> lu(Jac);
    if (!lu.isInvertible()) return r;
    const Vec<N> step = -lu.solve(F);
    // cap the step so Newton stays with the geodesic class of the seed
    const double cap = settings.newton_step_cap * std::max(vector_norm(M, start, v0), 1e-3);
    const double slen = vector_norm(M, start, step);
    double alpha = slen > cap ? cap / slen : 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 12; ++ls, alpha *= 0.5) {
      Vec<N> F2;
      Mat<N> J2;
      const Vec<N> v2 = v0 + alpha * step;
      if (residual(v2, F2, J2) && F2.template lpNorm<Eigen::Infinity>() < norm) {
        v0 = v2;
        F = F2;
        Jac = J2;
        norm = F.template lpNorm<Eigen::Infinity>();
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  r.v0 = v0;
  r.residual = norm;
  r.converged = norm <= tol;
  r.length = vector_norm(M, start, v0);
  return r;
}

// Distances with lattice upper bounds, shooting refinement and a memo cache.
// Safe for concurrent use: caches are guarded by shared mutexes.
template <int N>
class DistanceSolver {
 public:
  explicit DistanceSolver(const ChartManifold<N>& M, DistanceSettings s = {})
      : M_(M), settings_(s) {}

  const ChartManifold<N>& manifold() const { return M_; }
  const DistanceSettings& settings() const { return settings_; }

  const Lattice<N>& lattice() const {
    std::call_once(lattice_once_, [this] { lattice_ = std::make_unique<Lattice<N>>(M_, settings_.lattice_nodes); });
    return *lattice_;
  }

  // Chord candidates and the lattice path; every value is the length of an actual curve.
  double upper_bound(const Point<N>& x0, const Point<N>& y0) const {
    const Point<N> x = M_.canonical(x0), y = M_.canonical(y0);
    return std::min(best_chord(x, y).first, lattice_bound(x, y));
  }

  DistanceResult<N> solve(const Point<N>& x0, const Point<N>& y0) const {
    const Point<N> x = M_.canonical(x0), y = M_.canonical(y0);
    DistanceResult<N> out;
    const auto chords = chord_seeds(x, y);
    const double lat = lattice_bound(x, y);
    double ub = lat;
    for (const auto& c : chords) ub = std::min(ub, c.length);
    out.upper_bound = ub;
    out.length = ub;
    out.start = x;
    ShotResult<N> best;
    auto consider = [&](const ShotResult<N>& s) {
      if (s.converged && s.length < best.length) best = s;
    };
    for (const auto& c : chords) {
      if (best.converged && c.length > 1.5 * best.length) break;
      consider(shoot(M_, c.start, c.target, c.v0, settings_));
    }
    const double slack = 1e-9 * (1.0 + ub);
    // a converged chord shot may still be a longer geodesic; the lattice path decides
    {
      if (auto seed = path_seed(x, y)) consider(shoot(M_, seed->start, seed->target, seed->v0, settings_));
    }
    if (best.converged && best.length <= ub + slack) {
      out.length = std::min(best.length, ub);
      out.refined = true;
      out.start = best.start;
      out.v0 = best.v0;
      out.residual = best.residual;
    }
    return out;
  }

  double distance(const Point<N>& x0, const Point<N>& y0) const {
    const Point<N> x = M_.canonical(x0), y = M_.canonical(y0);
    const Key k = key(x, y);
    {
      std::shared_lock lock(memo_mutex_);
      auto it = memo_.find(k);
      if (it != memo_.end()) return it->second;
    }
    const double d = solve(x, y).length;
    std::unique_lock lock(memo_mutex_);
    memo_.emplace(k, d);
    return d;
  }

  // Minimizing geodesic sampled by arc length.
  GeodesicPath<N> geodesic(const Point<N>& x, const Point<N>& y, int samples) const {
    const auto r = solve(x, y);
    if (!r.refined) throw SolverFailure("geodesic: shooting did not converge");
    if (r.length == 0.0) {
      GeodesicPath<N> g;
      g.t.assign(static_cast<std::size_t>(samples), 0.0);
      g.points.assign(static_cast<std::size_t>(samples), r.start);
      g.velocities.assign(static_cast<std::size_t>(samples), Vec<N>::Zero());
      return g;
    }
    const Vec<N> u = r.v0 / r.length;
    auto g = geodesic_path(M_, r.start, u, r.length, samples, settings_.flow);
    g.endpoint_residual = r.residual;
    return g;
  }

 private:
  struct Seed {
    Point<N> start;
    Point<N> target;
    Vec<N> v0;
    double length;
  };

  using Key = std::array<std::uint64_t, 2 * N + 2>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::size_t h = 1469598103934665603ull;
      for (auto v : k) h = (h ^ v) * 1099511628211ull;
      return h;
    }
  };

  static Key key(const Point<N>& x, const Point<N>& y) {
    Key k{};
    k[0] = static_cast<std::uint64_t>(x.chart);
    k[1] = static_cast<std::uint64_t>(y.chart);
    for (int i = 0; i < N; ++i) {
      std::memcpy(&k[2 + i], &x.x[i], sizeof(double));
      std::memcpy(&k[2 + N + i], &y.x[i], sizeof(double));
    }
    return k;
  }

  bool representable(const Point<N>& p) const {
    if (!p.x.allFinite()) return false;
    const auto& c = M_.chart(p.chart);
    for (int k = 0; k < N; ++k)
      if (!c.periodic[k] && (p.x[k] < c.lo[k] || p.x[k] > c.hi[k])) return false;
    return true;
  }

  // Straight coordinate chords to nearby periodic images, in each chart containing x.
  std::vector<Seed> chord_seeds(const Point<N>& x, const Point<N>& y) const {
    std::vector<Seed> seeds;
    for (int c = 0; c < M_.chart_count(); ++c) {
      const Point<N> xs = c == x.chart ? x : M_.to_chart(x, c);
      const Point<N> ys = c == y.chart ? y : M_.to_chart(y, c);
      if (!representable(xs) || !representable(ys)) continue;
      const auto& ch = M_.chart(c);
      const Vec<N> d0 = detail::displacement(M_, c, xs.x, ys.x);
      std::array<int, N> shift;
      shift.fill(-1);
      for (;;) {
        Vec<N> d = d0;
        bool skip = false;
        for (int k = 0; k < N; ++k) {
          if (ch.periodic[k]) d[k] += shift[k] * (ch.hi[k] - ch.lo[k]);
          else if (shift[k] != 0) skip = true;
        }
        if (!skip) {
          Point<N> target = ys;
          target.x = xs.x + d;
          bool inside = true;
          for (int k = 0; k < N; ++k)
            if (!ch.periodic[k] && (target.x[k] < ch.lo[k] || target.x[k] > ch.hi[k])) inside = false;
          if (inside) seeds.push_back({xs, ys, d, detail::chord_length(M_, c, xs.x, d, 16)});
        }
        int k = 0;
        while (k < N && ++shift[k] > 1) shift[k++] = -1;
        if (k == N) break;
      }
    }
    std::sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) { return a.length < b.length; });
    if (static_cast<int>(seeds.size()) > settings_.chord_seeds) seeds.resize(static_cast<std::size_t>(settings_.chord_seeds));
    return seeds;
  }

  std::pair<double, int> best_chord(const Point<N>& x, const Point<N>& y) const {
    const auto s = chord_seeds(x, y);
    if (s.empty()) return {std::numeric_limits<double>::infinity(), -1};
    return {s.front().length, 0};
  }

  std::shared_ptr<const typename Lattice<N>::Tree> tree(int source) const {
    {
      std::shared_lock lock(tree_mutex_);
      auto it = trees_.find(source);
      if (it != trees_.end()) return it->second;
    }
    auto t = std::make_shared<const typename Lattice<N>::Tree>(lattice().dijkstra(source));
    std::unique_lock lock(tree_mutex_);
    if (trees_.size() >= settings_.tree_cache) trees_.clear();
    trees_.emplace(source, t);
    return t;
  }

  double node_chord(const Point<N>& p, int node) const {
    const auto& n = lattice().node(node);
    return detail::chord_length(M_, p.chart, p.x, detail::displacement(M_, p.chart, p.x, n.x), 16);
  }

  // Dijkstra tree from whichever endpoint node is cached, preferring y (many-to-one queries).
  std::pair<std::shared_ptr<const typename Lattice<N>::Tree>, bool> endpoint_tree(int nx, int ny) const {
    {
      std::shared_lock lock(tree_mutex_);
      auto it = trees_.find(ny);
      if (it != trees_.end()) return {it->second, false};
      it = trees_.find(nx);
      if (it != trees_.end()) return {it->second, true};
    }
    return {tree(ny), false};
  }

  double lattice_bound(const Point<N>& x, const Point<N>& y) const {
    const auto& L = lattice();
    const int nx = L.nearest(x), ny = L.nearest(y);
    if (nx < 0 || ny < 0) return std::numeric_limits<double>::infinity();
    const auto [T, from_x] = endpoint_tree(nx, ny);
    return node_chord(x, nx) + T->dist[static_cast<std::size_t>(from_x ? ny : nx)] + node_chord(y, ny);
  }

  // Initial direction toward the lattice path at about a third of its length.
  std::optional<Seed> path_seed(const Point<N>& x, const Point<N>& y) const {
    const auto& L = lattice();
    const int nx = L.nearest(x), ny = L.nearest(y);
    if (nx < 0 || ny < 0) return std::nullopt;
    const auto [T, from_x] = endpoint_tree(nx, ny);
    const double mid = T->dist[static_cast<std::size_t>(from_x ? ny : nx)];
    const double total = node_chord(x, nx) + mid + node_chord(y, ny);
    if (!std::isfinite(total)) return std::nullopt;
    std::vector<int> path;  // node sequence starting at nx
    for (int v = from_x ? ny : nx; v >= 0; v = T->pred[static_cast<std::size_t>(v)]) path.push_back(v);
    if (from_x) std::reverse(path.begin(), path.end());
    Vec<N> pos = x.x;  // unwrapped along periodic axes
    double walked = 0.0;
    for (std::size_t i = 0; i < path.size(); ++i) {
      const auto& n = L.node(path[i]);
      if (n.chart != x.chart) break;
      pos += detail::displacement(M_, x.chart, pos, n.x);
      if (i > 0) walked += std::abs(T->dist[static_cast<std::size_t>(path[i])] - T->dist[static_cast<std::size_t>(path[i - 1])]);
      if (walked >= total / 3.0) break;
    }
    Vec<N> dir = pos - x.x;
    if (dir.norm() < 1e-12 && (x.chart == y.chart || M_.chart_count() == 1))
      dir = detail::displacement(M_, x.chart, x.x, y.x);
    const double glen = vector_norm(M_, x, dir);
    if (!(glen > 0.0)) return std::nullopt;
    return Seed{x, y, dir * (total / glen), total};
  }

  const ChartManifold<N>& M_;
  DistanceSettings settings_;
  mutable std::once_flag lattice_once_;
  mutable std::unique_ptr<Lattice<N>> lattice_;
  mutable std::shared_mutex tree_mutex_;
  mutable std::unordered_map<int, std::shared_ptr<const typename Lattice<N>::Tree>> trees_;
  mutable std::shared_mutex memo_mutex_;
  mutable std::unordered_map<Key, double, KeyHash> memo_;
};

template <int N>
double distance(const ChartManifold<N>& M, const Point<N>& x, const Point<N>& y) {
  return DistanceSolver<N>(M).distance(x, y);
}

// Thin triangle p, q+, q- with d(q+-, p) > L and excess at p below epsilon.
template <int N>
struct TriangleConfig {
  Point<N> p, q_plus, q_minus;
  double L = 0.0;
  double epsilon = 0.0;
  double d_plus = 0.0;   // d(q+, p)
  double d_minus = 0.0;  // d(q-, p)
  double d_pm = 0.0;     // d(q-, q+)

  double excess_at_p() const { return d_plus + d_minus - d_pm; }

  static TriangleConfig make(const DistanceSolver<N>& S, const Point<N>& p, const Point<N>& qp,
                             const Point<N>& qm, double L, double epsilon) {
    TriangleConfig T;
    T.p = p;
    T.q_plus = qp;
    T.q_minus = qm;
    T.L = L;
    T.epsilon = epsilon;
    T.d_plus = S.distance(qp, p);
    T.d_minus = S.distance(qm, p);
    T.d_pm = S.distance(qm, qp);
    if (!(T.d_plus > L && T.d_minus > L))
      throw HypothesisViolation("TriangleConfig: need d(q+-, p) > L (got " + std::to_string(T.d_plus) +
                                ", " + std::to_string(T.d_minus) + ")");
    if (!(T.excess_at_p() < epsilon))
      throw HypothesisViolation("TriangleConfig: excess at p " + std::to_string(T.excess_at_p()) +
                                " is not below epsilon");
    return T;
  }
};

template <int N>
double excess(const DistanceSolver<N>& S, const TriangleConfig<N>& T, const Point<N>& x) {
  return S.distance(x, T.q_minus) + S.distance(x, T.q_plus) - T.d_pm;
}

template <int N>
double busemann_standin(const DistanceSolver<N>& S, const TriangleConfig<N>& T, int sign, const Point<N>& x) {
  if (sign > 0) return S.distance(x, T.q_plus) - T.d_plus;
  return S.distance(x, T.q_minus) - T.d_minus;
}

// Polar data along a ray: area element, mean curvature of distance spheres and its drift version.
struct RadialSample {
  double rho = 0.0;
  double area = 0.0;       // sqrt det of the Jacobi-field Gram matrix
  double H = 0.0;          // mean curvature, d/drho log area
  double H_X = 0.0;        // H - X(gamma')
  double A2 = 0.0;         // |A|^2
  double A2_free = 0.0;    // |A|^2 - H^2 / (n - 1)
  double X_rho = 0.0;      // X(gamma')
  double ric = 0.0;        // Ric(gamma', gamma')
  double nabla_X = 0.0;    // (nabla_{gamma'} X)(gamma')
  double X_norm2 = 0.0;    // unused by the Riccati identity; |X|^2 for diagnostics
  double dH_X = 0.0;       // d/drho H_X from the Jacobi equation, no differencing
};

enum class Truncation { None, Conjugate, Cut, Escaped };

inline const char* truncation_name(Truncation t) {
  switch (t) {
    case Truncation::None: return "none";
    case Truncation::Conjugate: return "conjugate";
    case Truncation::Cut: return "cut";
    default: return "escaped";
  }
}

template <int N>
struct RadialData {
  std::vector<RadialSample> samples;  // pre-truncation samples only
  Truncation truncation = Truncation::None;
  double truncated_at = 0.0;
  std::string mode = "full-jacobi";
};

struct RadialSettings {
  double cut_slack = 0.005;       // truncate once rho exceeds (1 + slack) * upper-bound distance
  double conjugate_H = -1e6;
  bool detect_cut = true;
};

namespace detail {

// T(l, i) = R^l_{kij} v^j v^k, so that R(J, v)v = T J
template <int N>
Mat<N> tidal_operator(const Christoffel<N>& C, const ChristoffelDerivative<N>& D, const Vec<N>& v) {
  Mat<N> T = Mat<N>::Zero();
  for (int l = 0; l < N; ++l)
    for (int i = 0; i < N; ++i) {
      double s = 0.0;
      for (int j = 0; j < N; ++j)
        for (int k = 0; k < N; ++k) {
          double r = D[i][l](j, k) - D[j][l](i, k);
          for (int m = 0; m < N; ++m) r += C.G[l](i, m) * C.G[m](j, k) - C.G[l](j, m) * C.G[m](i, k);
          s += r * v[j] * v[k];
        }
      T(l, i) = s;
    }
  return T;
}

}  // namespace detail

template <int N>
RadialData<N> radial_polar_data(const DistanceSolver<N>& S, const Point<N>& p0, const Vec<N>& direction,
                                double rho_max, int steps, const RadialSettings& rs = {}) {
  const auto& M = S.manifold();
  Point<N> p = p0;
  Vec<N> dir = direction;
  const Point<N> pc = M.canonical(p0);
  if (pc.chart != p.chart) {
    dir = M.transitions[static_cast<std::size_t>(p.chart)].jacobian(p.x) * dir;
  }
  p = pc;
  const Mat<N> g0 = M.metric(p);
  if (std::abs(std::sqrt(dir.dot(g0 * dir)) - 1.0) > 1e-8)
    throw DomainError("radial_polar_data: direction must be unit length");
  if (!(rho_max > 0.0) || steps < 2) throw DomainError("radial_polar_data: need rho_max > 0, steps >= 2");
  // g-orthonormal basis of the complement of dir
  Mat<N> E = Mat<N>::Identity();
  Eigen::Matrix<double, N, N - 1> basis;
  {
    std::vector<Vec<N>> es{dir};
    for (int k = 0; k < N && static_cast<int>(es.size()) < N; ++k) {
      Vec<N> e = E.col(k);
      for (const auto& b : es) e -= b.dot(g0 * e) * b;
      const double nn = std::sqrt(e.dot(g0 * e));
      if (nn > 1e-6) es.push_back(e / nn);
    }
    for (int a = 1; a < N; ++a) basis.col(a - 1) = es[static_cast<std::size_t>(a)];
  }
  RadialData<N> out;
  std::vector<double> times;
  for (int i = 1; i <= steps; ++i) times.push_back(rho_max * i / steps);
  FlowState<N> s;
  s.p = p;
  s.v = dir;
  s.dx.setZero();
  s.dv.setIdentity();
  bool stop = false;
  // orientation of [v, J] at the start; a sign change means a conjugate point
  double orient = 0.0;
  {
    Mat<N> F;
    F.col(0) = dir;
    F.template rightCols<N - 1>() = basis;
    orient = F.determinant() > 0 ? 1.0 : -1.0;
  }
  int last_chart = p.chart;
  auto obs = [&](double rho, const FlowState<N>& st) {
    if (stop) return;
    if (st.p.chart != last_chart) {
      if (M.transitions[static_cast<std::size_t>(st.p.chart)].jacobian(st.p.x).determinant() < 0) orient = -orient;
      last_chart = st.p.chart;
    }
    const auto jet = M.jet(st.p, 2);
    const Mat<N> g = jet.g;
    const Mat<N> ginv = detail::checked_inverse<N>(g);
    const auto Gm = detail::christoffel_from_jet<N>(jet, ginv);
    const Eigen::Matrix<double, N, N - 1> J = st.dx * basis;
    Eigen::Matrix<double, N, N - 1> DJ = st.dv * basis;
    for (int k = 0; k < N; ++k)
      for (int a = 0; a < N - 1; ++a) DJ(k, a) += st.v.dot(Gm.G[k] * J.col(a));
    const Eigen::Matrix<double, N - 1, N - 1> Gram = J.transpose() * g * J;
    const Eigen::Matrix<double, N - 1, N - 1> B = J.transpose() * g * DJ;
    const double det = Gram.determinant();
    Mat<N> F;
    F.col(0) = st.v;
    F.template rightCols<N - 1>() = J;
    RadialSample r;
    r.rho = rho;
    if (!(det > 0.0) || !(orient * F.determinant() > 0.0)) {
      out.truncation = Truncation::Conjugate;
      out.truncated_at = rho;
      stop = true;
      return;
    }
    const Eigen::Matrix<double, N - 1, N - 1> Sop = Gram.ldlt().solve(B);
    r.area = std::sqrt(det);
    r.H = Sop.trace();
    r.A2 = (Sop * Sop).trace();
    r.A2_free = N > 2 ? r.A2 - r.H * r.H / (N - 1) : 0.0;
    if (r.H < rs.conjugate_H) {
      out.truncation = Truncation::Conjugate;
      out.truncated_at = rho;
      stop = true;
      return;
    }
    const Vec<N> X = M.X(st.p);
    r.X_rho = X.dot(st.v);
    r.H_X = r.H - r.X_rho;
    const auto D = detail::christoffel_derivative_from_jet<N>(jet, ginv);
    r.ric = st.v.dot(detail::ricci_from<N>(Gm, D) * st.v);
    r.nabla_X = st.v.dot(covariant_derivative_X(M, st.p) * st.v);
    r.X_norm2 = X.dot(ginv * X);
    {
      const Mat<N> T = detail::tidal_operator<N>(Gm, D, st.v);
      const Eigen::Matrix<double, N - 1, N - 1> dB = DJ.transpose() * g * DJ - J.transpose() * g * T * J;
      const Eigen::Matrix<double, N - 1, N - 1> dGram = B + B.transpose();
      r.dH_X = Gram.ldlt().solve(dB).trace() - (Gram.ldlt().solve(dGram) * Sop).trace() - r.nabla_X;
    }
    if (rs.detect_cut) {
      const double ub = S.upper_bound(p, st.p);
      if (rho > (1.0 + rs.cut_slack) * ub) {
        out.truncation = Truncation::Cut;
        out.truncated_at = rho;
        stop = true;
        return;
      }
    }
    out.samples.push_back(r);
  };
  const auto status = integrate_flow(M, s, rho_max, true, times, obs, S.settings().flow);
  if (status == FlowStatus::Escaped && !stop) {
    out.truncation = Truncation::Escaped;
    out.truncated_at = out.samples.empty() ? 0.0 : out.samples.back().rho;
  }
  return out;
}

// Residual of the augmented Riccati equation at each sample, using the Jacobi-field derivative of H_X.
template <int N>
std::vector<double> riccati_residual(const RadialData<N>& data, double m) {
  std::vector<double> res;
  const auto& s = data.samples;
  const double n = N;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double dHX = s[i].dH_X;
    const double ricXm = s[i].ric + s[i].nabla_X - s[i].X_rho * s[i].X_rho / m;
    const double rhs = -s[i].A2_free - s[i].H_X * s[i].H_X / (n - 1) - ricXm -
                       2.0 / (n - 1) * s[i].H_X * s[i].X_rho -
                       (n + m - 1) / (m * (n - 1)) * s[i].X_rho * s[i].X_rho;
    res.push_back(dHX - rhs);
  }
  return res;
}

}  // namespace belab
