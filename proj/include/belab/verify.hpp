#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "belab/catalog.hpp"
#include "belab/drift_pde.hpp"
#include "belab/errors.hpp"
#include "belab/geodesics.hpp"
#include "belab/geometry.hpp"
#include "belab/mesh.hpp"
#include "belab/modelspace.hpp"
#include "belab/numerics.hpp"
#include "belab/report.hpp"

namespace belab {

// Curvature and drift hypotheses sampled on a validation grid.
struct HypothesisSample {
  double deficit = 0.0;  // min eigenvalue of Ric_X^m + (n-1) delta g
  double sup_X = 0.0;
  std::size_t points = 0;

  json to_json() const { return json{{"deficit", deficit}, {"sup_X", sup_X}, {"points", points}}; }
};

struct ValidationSettings {
  int per_axis = 24;
  double tolerance = 1e-9;
};

namespace detail {

template <int N>
HypothesisSample sample_hypotheses(const ChartManifold<N>& M, const BakryEmeryParams& params, int per_axis) {
  const auto grid = sample_grid(M, per_axis);
  HypothesisSample h;
  h.deficit = curvature_bound_deficit(M, params.m, params.delta, grid);
  h.sup_X = sup_X_norm(M, grid);
  h.points = grid.size();
  return h;
}

template <int N>
HypothesisSample require_hypotheses(const ChartManifold<N>& M, const BakryEmeryParams& params,
                                    const ValidationSettings& v, bool curvature, bool drift, const std::string& what) {
  params.validate();
  const auto h = sample_hypotheses(M, params, v.per_axis);
  if (curvature && h.deficit < -v.tolerance)
    throw HypothesisViolation(what + ": Ric_X^m >= -(n-1) delta g fails on the validation grid (deficit " +
                              std::to_string(h.deficit) + ")");
  if (drift && h.sup_X > params.C + v.tolerance)
    throw HypothesisViolation(what + ": |X| <= C fails on the validation grid (sup " + std::to_string(h.sup_X) +
                              " > " + std::to_string(params.C) + ")");
  return h;
}

// g-unit vector from a direction z given in a g-orthonormal frame.
template <int N>
Vec<N> unit_from_frame(const ChartManifold<N>& M, const Point<N>& p, const Vec<N>& z) {
  const Eigen::LLT<Mat<N>> llt(M.metric(p));
  return llt.matrixU().solve(z / z.norm());
}

template <int N>
std::vector<Vec<N>> random_directions(const ChartManifold<N>& M, const Point<N>& p, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<Vec<N>> out;
  while (static_cast<int>(out.size()) < count) {
    Vec<N> z;
    for (int k = 0; k < N; ++k) z[k] = gauss(rng);
    if (z.norm() < 1e-8) continue;
    out.push_back(unit_from_frame(M, p, z));
  }
  return out;
}

// Equal-weight quadrature fan on the unit sphere: uniform angles for N = 2, Fibonacci points for N = 3.
template <int N>
std::vector<Vec<N>> direction_fan(const ChartManifold<N>& M, const Point<N>& p, int count) {
  std::vector<Vec<N>> out;
  for (int j = 0; j < count; ++j) {
    Vec<N> z;
    if constexpr (N == 2) {
      const double a = 2.0 * num::pi * (j + 0.5) / count;
      z << std::cos(a), std::sin(a);
    } else {
      const double golden = num::pi * (3.0 - std::sqrt(5.0));
      const double y = 1.0 - 2.0 * (j + 0.5) / count;
      const double rad = std::sqrt(std::max(0.0, 1.0 - y * y));
      z << rad * std::cos(golden * j), y, rad * std::sin(golden * j);
    }
    out.push_back(unit_from_frame(M, p, z));
  }
  return out;
}

// Cumulative integral of samples f(k * h), k = 0..n, Simpson on even nodes.
inline std::vector<double> cumulative_simpson(const std::vector<double>& f, double h) {
  std::vector<double> c(f.size(), 0.0);
  for (std::size_t k = 2; k < f.size(); k += 2) c[k] = c[k - 2] + h / 3.0 * (f[k - 2] + 4.0 * f[k - 1] + f[k]);
  for (std::size_t k = 1; k < f.size(); k += 2) {
    if (k + 1 < f.size())
      c[k] = c[k - 1] + h / 12.0 * (5.0 * f[k - 1] + 8.0 * f[k] - f[k + 1]);
    else
      c[k] = c[k - 1] + 0.5 * h * (f[k - 1] + f[k]);
  }
  return c;
}

inline double simpson(const std::vector<double>& f, double h) {
  if (f.size() < 2) return 0.0;
  return cumulative_simpson(f, h).back();
}

// Volume of a metric ball by polar quadrature over a direction fan.
template <int N>
double polar_ball_volume(const DistanceSolver<N>& S, const Point<N>& c, double radius, int rays, int steps) {
  const auto fan = direction_fan(S.manifold(), c, rays);
  const double w = sphere_area(N) / rays;
  const double h = radius / steps;
  double vol = 0.0;
  for (const auto& dir : fan) {
    const auto data = radial_polar_data(S, c, dir, radius, steps);
    std::vector<double> f{0.0};
    for (const auto& s : data.samples) f.push_back(s.area);
    vol += w * simpson(f, h);
  }
  return vol;
}

// Coordinates of q in the chart of G, with periodic axes unwrapped toward the patch centre.
template <int N>
Vec<N> patch_coords(const ChartManifold<N>& M, const Grid<N>& G, const Point<N>& q) {
  const Point<N> c = q.chart == G.chart ? q : M.to_chart(q, G.chart);
  const auto& ch = M.chart(G.chart);
  Vec<N> x = c.x;
  for (int k = 0; k < N; ++k) {
    if (!ch.periodic[k]) continue;
    const double period = ch.hi[k] - ch.lo[k];
    const double centre = G.origin[k] + 0.5 * (G.count[k] - 1) * G.spacing[k];
    x[k] -= period * std::round((x[k] - centre) / period);
  }
  return x;
}

// Multilinear interpolation of nodal data; corners without data fall back to the nearest valid corner.
template <int N, class T>
std::optional<T> interpolate(const Grid<N>& G, const std::vector<T>& values, const std::vector<char>& valid,
                             const Vec<N>& x) {
  typename Grid<N>::Index base{};
  Vec<N> t;
  for (int k = 0; k < N; ++k) {
    const double s = (x[k] - G.origin[k]) / G.spacing[k];
    int b = static_cast<int>(std::floor(s));
    b = std::clamp(b, 0, G.count[k] - 2);
    base[k] = b;
    t[k] = std::clamp(s - b, 0.0, 1.0);
  }
  T acc{};
  bool first = true;
  double wsum = 0.0, best_w = -1.0;
  std::optional<T> best;
  for (int corner = 0; corner < (1 << N); ++corner) {
    typename Grid<N>::Index m = base;
    double w = 1.0;
    for (int k = 0; k < N; ++k) {
      const int bit = (corner >> k) & 1;
      m[k] += bit;
      w *= bit ? t[k] : 1.0 - t[k];
    }
    const std::size_t i = G.index(m);
    if (!valid[i]) continue;
    if (w > best_w) {
      best_w = w;
      best = values[i];
    }
    if (first) {
      acc = values[i] * w;
      first = false;
    } else {
      acc = acc + values[i] * w;
    }
    wsum += w;
  }
  if (first) return std::nullopt;
  if (wsum < 1.0 - 1e-12) return best;
  return acc;
}

// Smallest of uniformly spaced samples, refined by the vertex of the parabola through the discrete minimum.
inline double refined_min(const std::vector<double>& v) {
  const auto it = std::min_element(v.begin(), v.end());
  const double m = *it;
  const auto k = static_cast<std::size_t>(it - v.begin());
  if (k == 0 || k + 1 >= v.size()) return m;
  const double a = v[k - 1], c = v[k + 1];
  const double curv = a - 2.0 * m + c;
  if (!(curv > 0.0)) return m;
  return m - (c - a) * (c - a) / (8.0 * curv);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Mean curvature comparison along rays

struct RaySettings {
  int steps = 400;
  std::uint64_t seed = 1;
  double tolerance = 1e-6;
  ValidationSettings validation{};
  RadialSettings radial{};
};

template <int N>
VerificationReport check_mean_curvature_comparison(const DistanceSolver<N>& S, const BakryEmeryParams& params,
                                                   const Point<N>& p, int rays, double rho_max,
                                                   const RaySettings& settings = {}) {
  if (rays < 1 || !(rho_max > 0.0)) throw DomainError("check_mean_curvature_comparison: need rays >= 1, rho_max > 0");
  const auto& M = S.manifold();
  const auto hyp = detail::require_hypotheses(M, params, settings.validation, true, false, "check_mean_curvature_comparison");
  const ModelSpace model(N + params.m, -params.delta);
  VerificationReport rep;
  rep.check_name = "mean_curvature_comparison";
  rep.inputs = {{"params", params.to_json()}, {"p", std::vector<double>(p.x.data(), p.x.data() + N)},
                {"chart", p.chart}, {"rays", rays}, {"rho_max", rho_max}, {"model_dimension", model.d}};
  rep.tolerance = settings.tolerance;
  json lhs = json::array(), rhs = json::array(), trunc = json::array();
  double margin = std::numeric_limits<double>::infinity();
  std::size_t samples = 0;
  for (const auto& dir : detail::random_directions(M, p, rays, settings.seed)) {
    const auto data = radial_polar_data(S, p, dir, rho_max, settings.steps, settings.radial);
    double worst = std::numeric_limits<double>::infinity(), wl = 0.0, wr = 0.0;
    std::vector<double> gaps;
    for (const auto& s : data.samples) {
      const double bar = model_mean_curvature(model, s.rho);
      gaps.push_back(bar - s.H_X);
      if (bar - s.H_X < worst) {
        worst = bar - s.H_X;
        wl = s.H_X;
        wr = bar;
      }
      ++samples;
    }
    if (data.samples.empty()) continue;
    lhs.push_back(wl);
    rhs.push_back(wr);
    trunc.push_back(truncation_name(data.truncation));
    margin = std::min(margin, detail::refined_min(gaps));
  }
  if (samples == 0) throw SolverFailure("check_mean_curvature_comparison: no pre-cut samples");
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.margin = margin;
  rep.resolution = {{"ode_steps", settings.steps}, {"seed", settings.seed}, {"samples", samples},
                    {"validation", hyp.to_json()}};
  rep.resolution["truncation"] = trunc;
  rep.notes = "per ray: H_X and model H at the tightest pre-cut sample; margin refines that minimum by a parabola";
  return rep.finalize();
}

// H_X - model H_n <= C along rays.
template <int N>
VerificationReport check_mean_curvature_difference(const DistanceSolver<N>& S, const BakryEmeryParams& params,
                                                   const Point<N>& p, int rays, double rho_max,
                                                   const RaySettings& settings = {}) {
  if (rays < 1 || !(rho_max > 0.0)) throw DomainError("check_mean_curvature_difference: need rays >= 1, rho_max > 0");
  const auto& M = S.manifold();
  const auto hyp = detail::require_hypotheses(M, params, settings.validation, true, true, "check_mean_curvature_difference");
  const ModelSpace model(N, -params.delta);
  VerificationReport rep;
  rep.check_name = "mean_curvature_difference";
  rep.inputs = {{"params", params.to_json()}, {"p", std::vector<double>(p.x.data(), p.x.data() + N)},
                {"chart", p.chart}, {"rays", rays}, {"rho_max", rho_max}};
  rep.tolerance = settings.tolerance;
  json lhs = json::array();
  double margin = std::numeric_limits<double>::infinity();
  std::size_t samples = 0;
  for (const auto& dir : detail::random_directions(M, p, rays, settings.seed)) {
    const auto data = radial_polar_data(S, p, dir, rho_max, settings.steps, settings.radial);
    double worst = -std::numeric_limits<double>::infinity();
    std::vector<double> gaps;
    for (const auto& s : data.samples) {
      const double diff = s.H_X - model_mean_curvature(model, s.rho);
      worst = std::max(worst, diff);
      gaps.push_back(params.C - diff);
      ++samples;
    }
    if (data.samples.empty()) continue;
    lhs.push_back(worst);
    margin = std::min(margin, detail::refined_min(gaps));
  }
  if (samples == 0) throw SolverFailure("check_mean_curvature_difference: no pre-cut samples");
  rep.lhs = lhs;
  rep.rhs = params.C;
  rep.margin = margin;
  rep.resolution = {{"ode_steps", settings.steps}, {"seed", settings.seed}, {"samples", samples},
                    {"validation", hyp.to_json()}};
  rep.notes = "per ray: sup of H_X minus the n-dimensional model mean curvature";
  return rep.finalize();
}

// ---------------------------------------------------------------------------
// Area and volume comparison

struct AreaVolumeSettings {
  int fan = 64;
  int refine = 8;  // ODE samples per grid step, even
  double tolerance = 1e-6;
  ValidationSettings validation{};
  RadialSettings radial{};
};

struct AreaVolumeSeries {
  std::vector<double> rho;
  std::vector<double> volume, model_volume;
  std::vector<std::vector<double>> log_area_ratio;  // per ray, pre-cut grid points only
  std::vector<double> truncated_at;                  // per ray, infinity when untruncated

  std::vector<double> volume_ratio() const {
    std::vector<double> r;
    for (std::size_t k = 0; k < rho.size(); ++k) r.push_back(volume[k] / model_volume[k]);
    return r;
  }
};

template <int N>
AreaVolumeSeries area_volume_series(const DistanceSolver<N>& S, const BakryEmeryParams& params, const Point<N>& p,
                                    const std::vector<double>& rho_grid, const AreaVolumeSettings& settings = {}) {
  if (rho_grid.size() < 2) throw DomainError("area_volume_series: need at least two radii");
  if (settings.refine < 2 || settings.refine % 2 != 0) throw DomainError("area_volume_series: refine must be even");
  const double dr = rho_grid.front();
  for (std::size_t k = 0; k < rho_grid.size(); ++k)
    if (!(dr > 0.0) || std::abs(rho_grid[k] - dr * (k + 1)) > 1e-9 * rho_grid.back())
      throw DomainError("area_volume_series: rho_grid must be uniform, starting at its spacing");
  const auto& M = S.manifold();
  const ModelSpace model(N + params.m, -params.delta, params.C);
  const int K = static_cast<int>(rho_grid.size());
  const int steps = K * settings.refine;
  const double h = rho_grid.back() / steps;
  AreaVolumeSeries out;
  out.rho = rho_grid;
  out.volume.assign(rho_grid.size(), 0.0);
  const double w = sphere_area(N) / settings.fan;
  for (const auto& dir : detail::direction_fan(M, p, settings.fan)) {
    const auto data = radial_polar_data(S, p, dir, rho_grid.back(), steps, settings.radial);
    std::vector<double> f{0.0};
    for (const auto& s : data.samples) f.push_back(s.area);
    const auto cum = detail::cumulative_simpson(f, h);
    std::vector<double> lr;
    for (int k = 1; k <= K; ++k) {
      const std::size_t j = static_cast<std::size_t>(k * settings.refine);
      out.volume[static_cast<std::size_t>(k - 1)] += w * cum[std::min(j, cum.size() - 1)];
      if (j < f.size()) {
        const double rho = rho_grid[static_cast<std::size_t>(k - 1)];
        lr.push_back(std::log(f[j]) - params.C * rho - (model.d - 1.0) * log_ell(model, rho));
      }
    }
    out.log_area_ratio.push_back(lr);
    out.truncated_at.push_back(data.truncation == Truncation::None ? std::numeric_limits<double>::infinity()
                                                                   : data.truncated_at);
  }
  for (double r : rho_grid) out.model_volume.push_back(model_ball_volume(model, r, true));
  return out;
}

template <int N>
VerificationReport check_area_volume_comparison(const DistanceSolver<N>& S, const BakryEmeryParams& params,
                                                const Point<N>& p, const std::vector<double>& rho_grid,
                                                const AreaVolumeSettings& settings = {}) {
  const auto& M = S.manifold();
  const auto hyp = detail::require_hypotheses(M, params, settings.validation, true, true, "check_area_volume_comparison");
  const auto series = area_volume_series(S, params, p, rho_grid, settings);
  // per-step worst increase of log ratios, over rays and the ball volume
  std::vector<double> rise(rho_grid.size() - 1, -std::numeric_limits<double>::infinity());
  for (const auto& lr : series.log_area_ratio)
    for (std::size_t k = 1; k < lr.size(); ++k) rise[k - 1] = std::max(rise[k - 1], lr[k] - lr[k - 1]);
  const auto vr = series.volume_ratio();
  for (std::size_t k = 1; k < vr.size(); ++k) rise[k - 1] = std::max(rise[k - 1], std::log(vr[k] / vr[k - 1]));
  VerificationReport rep;
  rep.check_name = "area_volume_comparison";
  rep.inputs = {{"params", params.to_json()}, {"p", std::vector<double>(p.x.data(), p.x.data() + N)},
                {"chart", p.chart}, {"rho_grid", rho_grid}};
  rep.tolerance = settings.tolerance;
  rep.lhs = rise;
  rep.rhs = std::vector<double>(rise.size(), 0.0);
  double margin = std::numeric_limits<double>::infinity();
  for (double r : rise) margin = std::min(margin, -r);
  rep.margin = margin;
  rep.resolution = {{"fan", settings.fan}, {"ode_steps", static_cast<int>(rho_grid.size()) * settings.refine},
                    {"validation", hyp.to_json()}};
  std::ostringstream os;
  os << "largest log increase per grid step of e^{-C rho} A / model A (per ray) and Vol / weighted model Vol; "
     << "final volume ratio " << vr.back();
  rep.notes = os.str();
  return rep.finalize();
}

// ---------------------------------------------------------------------------
// Excess bound

struct ExcessBound {
  double psi_bar = 0.0;  // 2 * model H(L - 2r - 1)
  double a = 0.0;        // sup of max(0, -psi'' - psi' H) over the cut-off transition
  double c = 0.0;
  double sqrt_eps = 0.0;
  GreenBarrier G;
  std::vector<double> r0;

  // Minimum over r0 of the proof-chain bound at a point at distance dist from p.
  double operator()(double dist) const {
    double best = std::numeric_limits<double>::infinity();
    for (double s : r0) {
      const double v = dist <= s ? sqrt_eps * sqrt_eps + c * s : sqrt_eps + (psi_bar + a * sqrt_eps) * G.value(s) + c * s;
      best = std::min(best, v);
    }
    return best;
  }

  json to_json() const { return json{{"psi_bar", psi_bar}, {"a", a}, {"c", c}, {"r0_candidates", r0.size()}}; }
};

inline ExcessBound excess_bound(int n, const BakryEmeryParams& params, double L, double r, double epsilon) {
  if (!(L > 2.0 * r + 1.0)) throw HypothesisViolation("excess bound: need L > 2r + 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("excess bound: need 0 < epsilon < 1");
  const ModelSpace model(n + params.m, -params.delta);
  ExcessBound B{2.0 * model_mean_curvature(model, L - 2.0 * r - 1.0), 0.0, 0.0, std::sqrt(epsilon),
                green_barrier(model, r + 1.0), {}};
  const num::SmoothStep psi{r, r + 0.9};
  for (int k = 0; k <= 400; ++k) {
    const double x = r + 0.9 * k / 400.0;
    B.a = std::max(B.a, -psi.d2(x) - psi.d1(x) * model_mean_curvature(model, x));
  }
  B.c = std::max(3.0, 2.0 + B.sqrt_eps * psi.max_abs_d1());
  for (int k = 1; k < 256; ++k) B.r0.push_back(r * k / 256.0);
  for (int j = 9; j <= 30; ++j) B.r0.push_back(r * std::ldexp(1.0, -j));
  return B;
}

struct ExcessSettings {
  double tolerance = 1e-9;
  ValidationSettings validation{};
};

template <int N>
VerificationReport check_abresch_gromoll(const DistanceSolver<N>& S, const BakryEmeryParams& params,
                                         const TriangleConfig<N>& T, double r, const std::vector<Point<N>>& x_samples,
                                         const ExcessSettings& settings = {}) {
  if (!(r > 0.0)) throw DomainError("check_abresch_gromoll: r must be > 0");
  if (!(T.L > 2.0 * r + 1.0)) throw HypothesisViolation("check_abresch_gromoll: need L > 2r + 1");
  if (x_samples.empty()) throw DomainError("check_abresch_gromoll: no sample points");
  const auto hyp = detail::require_hypotheses(S.manifold(), params, settings.validation, true, true, "check_abresch_gromoll");
  const auto B = excess_bound(N, params, T.L, r, T.epsilon);
  std::vector<double> E, bound;
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& x : x_samples) {
    const double dist = S.distance(x, T.p);
    if (dist > r * (1.0 + 1e-9)) throw DomainError("check_abresch_gromoll: sample outside B_r(p)");
    E.push_back(excess(S, T, x));
    bound.push_back(B(dist));
    margin = std::min(margin, bound.back() - E.back());
  }
  VerificationReport rep;
  rep.check_name = "abresch_gromoll";
  rep.inputs = {{"params", params.to_json()}, {"L", T.L}, {"epsilon", T.epsilon}, {"r", r},
                {"excess_at_p", T.excess_at_p()}, {"bound", B.to_json()}};
  rep.tolerance = settings.tolerance;
  rep.lhs = E;
  rep.rhs = bound;
  rep.margin = margin;
  rep.resolution = {{"samples", x_samples.size()}, {"validation", hyp.to_json()}};
  std::ostringstream os;
  os << "sup E = " << *std::max_element(E.begin(), E.end()) << ", min bound = "
     << *std::min_element(bound.begin(), bound.end());
  rep.notes = os.str();
  return rep.finalize();
}

// Interior nodes of a ball mesh as sample points.
template <int N>
std::vector<Point<N>> ball_samples(const BallMesh<N>& ball) {
  std::vector<Point<N>> pts;
  for (std::size_t i : ball.interior) pts.push_back(ball.grid().point(i));
  return pts;
}

// ---------------------------------------------------------------------------
// Segment inequality

template <int N>
using PointFunction = std::function<double(const Point<N>&)>;

// Multilinear interpolant of a mesh field (active nodes only).
template <int N>
PointFunction<N> mesh_interpolant(const ChartManifold<N>& M, const MeshField<N>& f) {
  std::vector<double> vals(f.size());
  std::vector<char> valid(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    vals[i] = f[i];
    valid[i] = f.active(i);
  }
  return [&M, grid = f.grid, vals, valid](const Point<N>& q) {
    const auto v = detail::interpolate<N, double>(grid, vals, valid, detail::patch_coords(M, grid, q));
    if (!v) throw DomainError("mesh_interpolant: point outside the field's active nodes");
    return *v;
  };
}

template <int N>
struct SegmentDomain {
  Point<N> center;
  double radius = 0.0;
};

struct SegmentSettings {
  std::uint64_t seed = 1;
  double spacing = 0.05;      // mesh for the integral of f over B_2r
  int fan = 64;               // polar volume quadrature
  int radial_steps = 64;
  int geodesic_samples = 17;  // Simpson nodes along each segment
  double z = 2.326;           // one-sided 99% normal quantile
  double tolerance = 0.0;
  ValidationSettings validation{};
};

namespace detail {

// Uniform samples from a metric ball by rejection against sqrt(g) in a coordinate box.
template <int N>
class BallSampler {
 public:
  BallSampler(const DistanceSolver<N>& S, const SegmentDomain<N>& D) : S_(S), D_(D) {
    const auto& M = S.manifold();
    const Mat<N> g = M.metric(D.center);
    const double lmin = Eigen::SelfAdjointEigenSolver<Mat<N>>(g).eigenvalues().minCoeff();
    half_ = 1.5 * D.radius / std::sqrt(lmin);
    const auto& ch = M.chart(D.center.chart);
    for (int k = 0; k < N; ++k)
      if (!ch.periodic[k] && (D.center.x[k] - half_ < ch.lo[k] || D.center.x[k] + half_ > ch.hi[k]))
        throw DomainError("segment inequality: domain box leaves the chart");
    const int m = 17;
    typename Grid<N>::Index idx{};
    for (;;) {
      Vec<N> x = D.center.x;
      for (int k = 0; k < N; ++k) x[k] += half_ * (2.0 * idx[k] / (m - 1) - 1.0);
      smax_ = std::max(smax_, std::sqrt(M.metric(Point<N>(x, D.center.chart)).determinant()));
      int k = 0;
      while (k < N && ++idx[k] >= m) idx[k++] = 0;
      if (k == N) break;
    }
    smax_ *= 1.1;
  }

  Point<N> operator()(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> U(-1.0, 1.0), A(0.0, 1.0);
    const auto& M = S_.manifold();
    for (int attempt = 0; attempt < 100000; ++attempt) {
      Vec<N> x = D_.center.x;
      for (int k = 0; k < N; ++k) x[k] += half_ * U(rng);
      const Point<N> q(x, D_.center.chart);
      const double s = std::sqrt(M.metric(q).determinant());
      if (s > smax_) throw SolverFailure("segment inequality: sqrt(g) exceeds the rejection envelope");
      if (A(rng) * smax_ > s) continue;
      if (S_.distance(q, D_.center) < D_.radius) return q;
    }
    throw SolverFailure("segment inequality: rejection sampling made no progress");
  }

 private:
  const DistanceSolver<N>& S_;
  SegmentDomain<N> D_;
  double half_ = 0.0;
  double smax_ = 0.0;
};

// Integral of f along the minimizing geodesic from x to y.
template <int N>
double segment_integral(const DistanceSolver<N>& S, const PointFunction<N>& f, const Point<N>& x, const Point<N>& y,
                        int samples) {
  const auto g = S.geodesic(x, y, samples);
  if (g.length == 0.0) return 0.0;
  std::vector<double> v;
  for (const auto& q : g.points) v.push_back(f(S.manifold().canonical(q)));
  return simpson(v, g.length / (samples - 1));
}

}  // namespace detail

// sup over (0, 2r] of (l(rho) / l(rho / 2))^{d-1}
inline double segment_c1(int n, const BakryEmeryParams& params, double r) {
  const ModelSpace model(n + params.m, -params.delta);
  double c1 = 0.0;
  for (int k = 1; k <= 400; ++k) {
    const double rho = 2.0 * r * k / 400.0;
    c1 = std::max(c1, std::exp((model.d - 1.0) * (log_ell(model, rho) - log_ell(model, 0.5 * rho))));
  }
  return c1;
}

// Default domains: balls of radius r/3 centred r/2 from p along the first coordinate direction.
template <int N>
std::array<SegmentDomain<N>, 2> default_segment_domains(const DistanceSolver<N>& S, const Point<N>& p, double r) {
  const auto& M = S.manifold();
  Vec<N> e = Vec<N>::Zero();
  e[0] = 1.0;
  e /= vector_norm(M, p, e);
  std::array<SegmentDomain<N>, 2> D;
  for (int s = 0; s < 2; ++s) {
    const auto path = geodesic_path(M, p, Vec<N>((s == 0 ? -1.0 : 1.0) * e), 0.5 * r, 2);
    D[static_cast<std::size_t>(s)] = SegmentDomain<N>{M.canonical(path.points.back()), r / 3.0};
  }
  return D;
}

template <int N>
VerificationReport check_segment_inequality(const DistanceSolver<N>& S, const BakryEmeryParams& params,
                                            const Point<N>& p, double r, const PointFunction<N>& f, int trials,
                                            const std::array<SegmentDomain<N>, 2>& domains,
                                            const SegmentSettings& settings = {}) {
  if (!(r > 0.0) || trials < 2) throw DomainError("check_segment_inequality: need r > 0 and trials >= 2");
  const auto& M = S.manifold();
  const auto hyp = detail::require_hypotheses(M, params, settings.validation, true, true, "check_segment_inequality");
  for (const auto& D : domains)
    if (!(D.radius > 0.0) || S.distance(D.center, p) + D.radius > r * (1.0 + 1e-9))
      throw DomainError("check_segment_inequality: domains must be balls inside B_r(p)");
  // integral of f over B_2r(p), and the sign requirement there
  const auto big = ball_mesh(S, p, 2.0 * r, settings.spacing);
  double integral = 0.0, fmin = std::numeric_limits<double>::infinity();
  for (std::size_t i : big.interior) {
    const Point<N> q = big.grid().point(i);
    const double v = f(q);
    fmin = std::min(fmin, v);
    integral += v * std::sqrt(M.metric(q).determinant()) * big.grid().cell_volume();
  }
  if (fmin < -settings.validation.tolerance)
    throw HypothesisViolation("check_segment_inequality: f must be >= 0 on B_2r(p) (min " + std::to_string(fmin) + ")");
  const double V1 = detail::polar_ball_volume(S, domains[0].center, domains[0].radius, settings.fan, settings.radial_steps);
  const double V2 = detail::polar_ball_volume(S, domains[1].center, domains[1].radius, settings.fan, settings.radial_steps);
  const double c1 = segment_c1(N, params, r);
  const double c = 2.0 * r * c1 * std::exp(2.0 * r * params.C);
  const double rhs = c * (V1 + V2) * integral;

  const detail::BallSampler<N> s1(S, domains[0]), s2(S, domains[1]);
  std::mt19937_64 rng(settings.seed);
  double sum = 0.0, sum2 = 0.0, fmin_pair = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    const Point<N> x = s1(rng), y = s2(rng);
    const double F = detail::segment_integral(S, f, x, y, settings.geodesic_samples);
    sum += F;
    sum2 += F * F;
    fmin_pair = std::min(fmin_pair, F);
  }
  const double mean = sum / trials;
  const double var = std::max(0.0, (sum2 - trials * mean * mean) / (trials - 1));
  const double lhs = V1 * V2 * mean;
  const double se = V1 * V2 * std::sqrt(var / trials);
  const double upper = lhs + settings.z * se;

  VerificationReport rep;
  rep.check_name = "segment_inequality";
  json dj = json::array();
  for (const auto& D : domains) {
    json e;
    e["center"] = std::vector<double>(D.center.x.data(), D.center.x.data() + N);
    e["chart"] = D.center.chart;
    e["radius"] = D.radius;
    dj.push_back(e);
  }
  rep.inputs = {{"params", params.to_json()}, {"r", r}, {"trials", trials}, {"domains", dj},
                {"volumes", std::vector<double>{V1, V2}}, {"integral_f_B2r", integral}, {"c1", c1}, {"c", c}};
  rep.tolerance = settings.tolerance;
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.margin = rhs - upper;
  rep.resolution = {{"seed", settings.seed}, {"mesh_spacing", settings.spacing}, {"fan", settings.fan},
                    {"radial_steps", settings.radial_steps}, {"geodesic_samples", settings.geodesic_samples},
                    {"standard_error", se}, {"validation", hyp.to_json()}};
  std::ostringstream os;
  os << "margin uses the upper confidence bound " << upper << " (z = " << settings.z << ")";
  if (lhs - settings.z * se < rhs && rhs < upper) os << "; warning: insufficient trials, the confidence interval straddles the bound";
  // pointwise refinement: the best sampled pair sits below the averaged bound
  const double pointwise = c * (1.0 / V1 + 1.0 / V2) * integral;
  os << "; best pair F_f = " << fmin_pair << " vs c(1/V1 + 1/V2) int f = " << pointwise;
  rep.notes = os.str();
  return rep.finalize();
}

// ---------------------------------------------------------------------------
// Level sets of h_+ and the splitting checks

template <int N>
struct SplittingSetup {
  BallMesh<N> ball;
  Replacement<N> plus;
  std::vector<double> half_increment;  // per node; NaN where the stencil is incomplete

  double mesh_tolerance(const std::vector<std::size_t>& nodes) const {
    double t = 0.0;
    for (std::size_t i : nodes) t = std::max(t, half_increment[i]);
    return t;
  }
};

template <int N>
SplittingSetup<N> splitting_setup(const DistanceSolver<N>& S, const TriangleConfig<N>& T, double r, double spacing) {
  SplittingSetup<N> out{ball_mesh(S, T.p, r, spacing), {}, {}};
  out.plus = x_harmonic_replacement(S, T, 1, out.ball, false);
  const auto& u = out.plus.h;
  out.half_increment.assign(u.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!u.active(i)) continue;
    double inc = 0.0;
    bool ok = true;
    for (int k = 0; k < N && ok; ++k)
      for (int s : {-1, 1}) {
        typename Grid<N>::Index d{};
        d[k] = s;
        const long j = u.grid.offset(i, d);
        if (j < 0 || !u.active(static_cast<std::size_t>(j))) {
          ok = false;
          break;
        }
        inc = std::max(inc, std::abs(u[static_cast<std::size_t>(j)] - u[i]));
      }
    if (ok) out.half_increment[i] = 0.5 * inc;
  }
  return out;
}

// Nodes with |h_+| below half the local increment.
template <int N>
std::vector<std::size_t> level_set_nodes(const SplittingSetup<N>& s) {
  std::vector<std::size_t> out;
  for (std::size_t i : s.ball.interior)
    if (std::isfinite(s.half_increment[i]) && std::abs(s.plus.h[i]) <= s.half_increment[i]) out.push_back(i);
  return out;
}

template <int N>
struct LevelTriple {
  Point<N> x, y, z;
  double level_gap = 0.0;  // |h(x) - h(y)|
};

struct PythagorasSettings {
  double spacing = 0.1;
  double threshold = 0.05;
  double z_fraction = 0.5;  // d(y, z) as a fraction of r/4
  std::uint64_t seed = 1;
  double tolerance = 0.0;
};

template <int N>
std::vector<LevelTriple<N>> level_triples(const DistanceSolver<N>& S, const TriangleConfig<N>& T,
                                          const SplittingSetup<N>& setup, int count, const PythagorasSettings& ps) {
  const auto& ball = setup.ball;
  const auto& h = setup.plus.h;
  const double r4 = 0.25 * ball.radius;
  std::vector<std::size_t> inner;
  for (std::size_t i : ball.interior)
    if (ball.distance[i] < r4 && std::isfinite(setup.half_increment[i])) inner.push_back(i);
  std::mt19937_64 rng(ps.seed);
  std::vector<LevelTriple<N>> out;
  const double min_sep = 2.0 * ball.grid().min_spacing();
  for (int attempt = 0; attempt < 200 * count && static_cast<int>(out.size()) < count; ++attempt) {
    if (inner.empty()) break;
    std::uniform_int_distribution<std::size_t> pick(0, inner.size() - 1);
    const std::size_t ix = inner[pick(rng)];
    std::vector<std::size_t> mates;
    for (std::size_t j : inner)
      if (j != ix && std::abs(h[j] - h[ix]) <= setup.half_increment[ix] &&
          S.distance(ball.grid().point(j), ball.grid().point(ix)) >= min_sep)
        mates.push_back(j);
    if (mates.empty()) continue;
    std::uniform_int_distribution<std::size_t> pm(0, mates.size() - 1);
    const std::size_t iy = mates[pm(rng)];
    LevelTriple<N> t;
    t.x = ball.grid().point(ix);
    t.y = ball.grid().point(iy);
    t.level_gap = std::abs(h[ix] - h[iy]);
    // z on the minimizing geodesic from y toward q+, kept inside B_{r/4}(p) when possible
    const auto sol = S.solve(t.y, T.q_plus);
    if (!sol.refined || sol.length == 0.0) continue;
    const Vec<N> u = sol.v0 / sol.length;
    double step = ps.z_fraction * r4;
    for (int k = 0; k < 6; ++k, step *= 0.5) {
      t.z = S.manifold().canonical(geodesic_path(S.manifold(), sol.start, u, step, 2).points.back());
      if (S.distance(t.z, T.p) < r4) break;
    }
    out.push_back(t);
  }
  if (out.empty()) throw DomainError("level-set selection: no admissible x, y on a common level of h_+ in B_{r/4}(p)");
  return out;
}

template <int N>
double pythagoras_defect(const DistanceSolver<N>& S, const Point<N>& x, const Point<N>& y, const Point<N>& z) {
  const double a = S.distance(x, y), b = S.distance(y, z), c = S.distance(x, z);
  return a * a + b * b - c * c;
}

template <int N>
VerificationReport check_pythagoras_defect(const DistanceSolver<N>& S, const BakryEmeryParams& params,
                                           const TriangleConfig<N>& T, double r, int triples,
                                           const PythagorasSettings& settings = {}) {
  if (triples < 1) throw DomainError("check_pythagoras_defect: triples must be >= 1");
  params.validate();
  const auto setup = splitting_setup(S, T, r, settings.spacing);
  const auto tri = level_triples(S, T, setup, triples, settings);
  std::vector<double> defect, gaps;
  for (const auto& t : tri) {
    defect.push_back(pythagoras_defect(S, t.x, t.y, t.z));
    gaps.push_back(t.level_gap);
  }
  VerificationReport rep;
  rep.check_name = "pythagoras_defect";
  rep.inputs = {{"params", params.to_json()}, {"L", T.L}, {"epsilon", T.epsilon}, {"r", r},
                {"threshold", settings.threshold}, {"z_fraction", settings.z_fraction}};
  rep.tolerance = settings.tolerance;
  rep.lhs = defect;
  rep.rhs = settings.threshold;
  rep.margin = settings.threshold - *std::max_element(defect.begin(), defect.end());
  rep.resolution = {{"mesh_spacing", settings.spacing}, {"triples", tri.size()}, {"seed", settings.seed},
                    {"solver_residual", setup.plus.residual},
                    {"max_level_gap", *std::max_element(gaps.begin(), gaps.end())}};
  rep.notes = "threshold is a calibrated golden value, not a derived constant";
  return rep.finalize();
}

// Best-of-k witnesses for the two segment integrals along sigma (z* to y*) and the fan tau_s from x*.
struct SegmentQuantitySettings {
  int candidates = 8;
  double rho_star = 0.05;
  int s_samples = 9;
  int t_samples = 9;
  double threshold = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
  PythagorasSettings triple{};
};

template <int N>
struct NodalDerivatives {
  std::vector<Vec<N>> grad;      // g^{-1} dh
  std::vector<double> hess_norm; // |Hess h|_g
  std::vector<char> valid;
};

template <int N>
NodalDerivatives<N> nodal_derivatives(const ChartManifold<N>& M, const MeshField<N>& h) {
  NodalDerivatives<N> D;
  D.grad.assign(h.size(), Vec<N>::Zero());
  D.hess_norm.assign(h.size(), 0.0);
  D.valid.assign(h.size(), 0);
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!mesh::has_stencil(h, i)) continue;
    const auto G = detail::node_geometry(M, h.grid.point(i));
    const auto v = mesh::gather(h, i);
    D.grad[i] = G.ginv * mesh::gradient_from<N>(v, h.grid.spacing);
    const Mat<N> H = detail::covariant_hessian_from<N>(v, h.grid.spacing, G.C);
    D.hess_norm[i] = std::sqrt(std::max(0.0, (G.ginv * H * G.ginv * H).trace()));
    D.valid[i] = 1;
  }
  return D;
}

template <int N>
VerificationReport check_segment_quantities(const DistanceSolver<N>& S, const BakryEmeryParams& params,
                                            const TriangleConfig<N>& T, double r, int triples,
                                            const SegmentQuantitySettings& settings = {}) {
  if (triples < 1 || settings.candidates < 1) throw DomainError("check_segment_quantities: need triples, candidates >= 1");
  if (settings.s_samples < 3 || settings.s_samples % 2 == 0 || settings.t_samples < 3 || settings.t_samples % 2 == 0)
    throw DomainError("check_segment_quantities: sample counts must be odd and >= 3");
  params.validate();
  const auto& M = S.manifold();
  const auto setup = splitting_setup(S, T, r, settings.triple.spacing);
  const auto tri = level_triples(S, T, setup, triples, settings.triple);
  const auto D = nodal_derivatives(M, setup.plus.h);
  const auto& G = setup.ball.grid();
  auto grad_at = [&](const Point<N>& q) {
    const auto v = detail::interpolate<N, Vec<N>>(G, D.grad, D.valid, detail::patch_coords(M, G, q));
    if (!v) throw DomainError("check_segment_quantities: point outside the solved ball");
    return *v;
  };
  auto hess_at = [&](const Point<N>& q) {
    const auto v = detail::interpolate<N, double>(G, D.hess_norm, D.valid, detail::patch_coords(M, G, q));
    if (!v) throw DomainError("check_segment_quantities: point outside the solved ball");
    return *v;
  };
  // velocity in the grid chart
  auto to_grid = [&](const Point<N>& q, const Vec<N>& v) {
    return q.chart == G.chart ? v : Vec<N>(M.transitions[static_cast<std::size_t>(q.chart)].jacobian(q.x) * v);
  };
  std::mt19937_64 rng(settings.seed);
  auto jitter = [&](const Point<N>& c) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::normal_distribution<double> gauss;
    Vec<N> z;
    for (int k = 0; k < N; ++k) z[k] = gauss(rng);
    const double rad = settings.rho_star * std::pow(U(rng), 1.0 / N);
    return M.canonical(geodesic_path(M, c, detail::unit_from_frame(M, c, z), rad, 2).points.back());
  };
  std::vector<double> I1s, I2s, totals;
  for (const auto& t : tri) {
    double best = std::numeric_limits<double>::infinity(), b1 = 0.0, b2 = 0.0;
    for (int k = 0; k < settings.candidates; ++k) {
      const Point<N> xs = k == 0 ? t.x : jitter(t.x);
      const Point<N> ys = k == 0 ? t.y : jitter(t.y);
      const Point<N> zs = k == 0 ? t.z : jitter(t.z);
      const auto sigma = S.geodesic(zs, ys, settings.s_samples);
      if (sigma.length == 0.0) continue;
      const double ds = sigma.length / (settings.s_samples - 1);
      std::vector<double> f1, f2;
      for (std::size_t j = 0; j < sigma.points.size(); ++j) {
        const Point<N> q = M.canonical(sigma.points[j]);
        const Vec<N> sp = to_grid(sigma.points[j], sigma.velocities[j]);
        const Vec<N> w = grad_at(q) - sp;
        const Point<N> qg = q.chart == G.chart ? q : M.to_chart(q, G.chart);
        f1.push_back(std::sqrt(std::max(0.0, w.dot(M.metric(qg) * w))));
        const auto tau = S.geodesic(xs, q, settings.t_samples);
        std::vector<double> h;
        for (const auto& pt : tau.points) h.push_back(hess_at(M.canonical(pt)));
        f2.push_back(tau.length == 0.0 ? 0.0 : detail::simpson(h, tau.length / (settings.t_samples - 1)));
      }
      const double I1 = detail::simpson(f1, ds), I2 = detail::simpson(f2, ds);
      if (I1 + I2 < best) {
        best = I1 + I2;
        b1 = I1;
        b2 = I2;
      }
    }
    I1s.push_back(b1);
    I2s.push_back(b2);
    totals.push_back(best);
  }
  VerificationReport rep;
  rep.check_name = "segment_quantities";
  rep.inputs = {{"params", params.to_json()}, {"L", T.L}, {"epsilon", T.epsilon}, {"r", r},
                {"rho_star", settings.rho_star}, {"candidates", settings.candidates}};
  rep.tolerance = 0.0;
  rep.lhs = {{"gradient_alignment", I1s}, {"hessian_fan", I2s}};
  rep.rhs = std::isfinite(settings.threshold) ? json(settings.threshold) : json("unbounded");
  rep.margin = settings.threshold - *std::max_element(totals.begin(), totals.end());
  rep.resolution = {{"mesh_spacing", settings.triple.spacing}, {"s_samples", settings.s_samples},
                    {"t_samples", settings.t_samples}, {"seed", settings.seed}, {"triples", tri.size()}};
  rep.notes = "best of k jittered witnesses per triple, minimizing the sum of both integrals";
  return rep.finalize();
}

// ---------------------------------------------------------------------------
// Almost splitting: distortion of x -> (h_+(x), nearest level-set node)

struct SplittingSettings {
  double spacing = 0.1;
  int points = 40;           // sample nodes in B_{r/4}(p)
  int nearest_candidates = 4;
  double threshold = -1.0;   // negative: twice the mesh tolerance
  std::uint64_t seed = 1;
};

template <int N>
struct SplittingResult {
  double distortion = 0.0;
  double gh_bound = 0.0;
  double mesh_tolerance = 0.0;
  std::size_t level_nodes = 0;
  std::size_t components = 0;
  std::size_t pairs = 0;
};

template <int N>
SplittingResult<N> almost_splitting(const DistanceSolver<N>& S, const SplittingSetup<N>& setup,
                                    const SplittingSettings& settings) {
  const auto& ball = setup.ball;
  const auto& G = ball.grid();
  const auto& h = setup.plus.h;
  const auto level = level_set_nodes(setup);
  if (level.empty()) throw DomainError("almost splitting: empty level set h_+^{-1}(0)");
  SplittingResult<N> res;
  res.level_nodes = level.size();
  res.mesh_tolerance = setup.mesh_tolerance(level);
  // graph on level nodes: edges to level nodes within two grid steps, weighted by ambient distance
  std::vector<long> slot(G.size(), -1);
  for (std::size_t a = 0; a < level.size(); ++a) slot[level[a]] = static_cast<long>(a);
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(level.size());
  for (std::size_t a = 0; a < level.size(); ++a) {
    typename Grid<N>::Index d{};
    d.fill(-2);
    for (;;) {
      const long j = G.offset(level[a], d);
      if (j >= 0 && slot[static_cast<std::size_t>(j)] > static_cast<long>(a)) {
        const auto b = static_cast<std::size_t>(slot[static_cast<std::size_t>(j)]);
        const double w = S.distance(G.point(level[a]), G.point(level[b]));
        adj[a].push_back({b, w});
        adj[b].push_back({a, w});
      }
      int k = 0;
      while (k < N && ++d[k] > 2) d[k++] = -2;
      if (k == N) break;
    }
  }
  {
    std::vector<int> comp(level.size(), -1);
    for (std::size_t s = 0; s < level.size(); ++s) {
      if (comp[s] >= 0) continue;
      std::vector<std::size_t> stack{s};
      comp[s] = static_cast<int>(res.components);
      while (!stack.empty()) {
        const auto v = stack.back();
        stack.pop_back();
        for (const auto& [w, len] : adj[v])
          if (comp[w] < 0) {
            comp[w] = static_cast<int>(res.components);
            stack.push_back(w);
          }
      }
      ++res.components;
    }
  }
  auto dijkstra = [&](std::size_t src) {
    std::vector<double> dist(level.size(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> q;
    dist[src] = 0.0;
    q.push({0.0, src});
    while (!q.empty()) {
      const auto [d, v] = q.top();
      q.pop();
      if (d > dist[v]) continue;
      for (const auto& [w, len] : adj[v])
        if (d + len < dist[w]) {
          dist[w] = d + len;
          q.push({dist[w], w});
        }
    }
    return dist;
  };
  // sample points and their projections
  std::vector<std::size_t> inner;
  for (std::size_t i : ball.interior)
    if (ball.distance[i] < 0.25 * ball.radius) inner.push_back(i);
  std::mt19937_64 rng(settings.seed);
  std::shuffle(inner.begin(), inner.end(), rng);
  if (static_cast<int>(inner.size()) > settings.points) inner.resize(static_cast<std::size_t>(settings.points));
  std::sort(inner.begin(), inner.end());
  if (inner.size() < 2) throw DomainError("almost splitting: fewer than two nodes in B_{r/4}(p)");
  const auto& M = S.manifold();
  std::vector<std::size_t> proj;
  for (std::size_t i : inner) {
    const Point<N> x = G.point(i);
    std::vector<std::pair<double, std::size_t>> chord;
    for (std::size_t a = 0; a < level.size(); ++a)
      chord.push_back({detail::chord_length(M, G.chart, x.x, Vec<N>(G.coord(level[a]) - x.x), 8), a});
    const std::size_t keep = std::min(chord.size(), static_cast<std::size_t>(settings.nearest_candidates));
    std::partial_sort(chord.begin(), chord.begin() + static_cast<long>(keep), chord.end());
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = chord.front().second;
    for (std::size_t c = 0; c < keep; ++c) {
      const double d = S.distance(x, G.point(level[chord[c].second]));
      if (d < best) {
        best = d;
        arg = chord[c].second;
      }
    }
    proj.push_back(arg);
  }
  std::vector<std::vector<double>> dN(inner.size());
  for (std::size_t a = 0; a < inner.size(); ++a) dN[a] = dijkstra(proj[a]);
  for (std::size_t a = 0; a < inner.size(); ++a)
    for (std::size_t b = a + 1; b < inner.size(); ++b) {
      const double d = S.distance(G.point(inner[a]), G.point(inner[b]));
      const double dh = h[inner[a]] - h[inner[b]];
      const double dn = dN[a][proj[b]];
      const double prod = std::isfinite(dn) ? std::sqrt(dh * dh + dn * dn) : std::numeric_limits<double>::infinity();
      res.distortion = std::max(res.distortion, std::abs(d - prod));
      ++res.pairs;
    }
  res.gh_bound = 1.5 * res.distortion;
  return res;
}

template <int N>
VerificationReport check_almost_splitting(const DistanceSolver<N>& S, const BakryEmeryParams& params,
                                          const TriangleConfig<N>& T, double r, const SplittingSettings& settings = {}) {
  params.validate();
  const auto setup = splitting_setup(S, T, r, settings.spacing);
  const auto res = almost_splitting(S, setup, settings);
  const double threshold = settings.threshold >= 0.0 ? settings.threshold : 2.0 * res.mesh_tolerance;
  VerificationReport rep;
  rep.check_name = "almost_splitting";
  rep.inputs = {{"params", params.to_json()}, {"L", T.L}, {"epsilon", T.epsilon}, {"r", r}, {"threshold", threshold}};
  rep.tolerance = 0.0;
  rep.lhs = res.distortion;
  rep.rhs = threshold;
  rep.margin = threshold - res.distortion;
  rep.resolution = {{"mesh_spacing", settings.spacing}, {"mesh_tolerance", res.mesh_tolerance},
                    {"level_nodes", res.level_nodes}, {"level_components", res.components},
                    {"pairs", res.pairs}, {"seed", settings.seed}, {"solver_residual", setup.plus.residual}};
  std::ostringstream os;
  os << "GH upper bound " << res.gh_bound << " (1.5 x distortion)";
  if (res.components > 1) os << "; level set has " << res.components << " graph components";
  rep.notes = os.str();
  return rep.finalize();
}

// ---------------------------------------------------------------------------
// Projection smallness and Hessian quantities

struct ProjectionSettings {
  double spacing = 0.1;
  double threshold = std::numeric_limits<double>::infinity();
};

template <int N>
std::pair<double, double> projection_integrals(const ChartManifold<N>& M, const BakryEmeryParams& params,
                                               const SplittingSetup<N>& setup) {
  const auto& h = setup.plus.h;
  double drift = 0.0, curv = 0.0;
  for (std::size_t i : setup.ball.interior) {
    if (!mesh::has_stencil(h, i)) continue;
    const Point<N> q = h.grid.point(i);
    const auto G = detail::node_geometry(M, q);
    const Vec<N> grad = G.ginv * mesh::gradient(h, i);
    const double w = G.sqrtg * h.grid.cell_volume();
    const double xg = G.X.dot(grad);
    const Mat<N> B = bakry_emery_tensor(M, params.m, q) + (N - 1) * params.delta * M.metric(q);
    drift += w * xg * xg;
    curv += w * grad.dot(B * grad);
  }
  return {drift, curv};
}

template <int N>
VerificationReport check_projection_smallness(const DistanceSolver<N>& S, const BakryEmeryParams& params,
                                              const TriangleConfig<N>& T, double r,
                                              const ProjectionSettings& settings = {}) {
  params.validate();
  const auto setup = splitting_setup(S, T, r, settings.spacing);
  const auto [drift, curv] = projection_integrals(S.manifold(), params, setup);
  VerificationReport rep;
  rep.check_name = "projection_smallness";
  rep.inputs = {{"params", params.to_json()}, {"L", T.L}, {"epsilon", T.epsilon}, {"r", r}};
  rep.tolerance = 0.0;
  rep.lhs = {drift, curv};
  rep.rhs = std::isfinite(settings.threshold) ? json(settings.threshold) : json("unbounded");
  rep.margin = settings.threshold - (drift + curv);
  rep.resolution = {{"mesh_spacing", settings.spacing}, {"interior_nodes", setup.ball.interior.size()},
                    {"solver_residual", setup.plus.residual}};
  rep.notes = "lhs = [integral of <grad h+, X>^2, integral of (Ric_X^m + (n-1) delta g)(grad h+, grad h+)]";
  return rep.finalize();
}

template <int N>
VerificationReport check_hessian_estimates(const DistanceSolver<N>& S, const BakryEmeryParams& params,
                                           const TriangleConfig<N>& T, double r, double spacing,
                                           double threshold = std::numeric_limits<double>::infinity()) {
  params.validate();
  const auto Q = hessian_estimates(S, T, r, spacing);
  VerificationReport rep;
  rep.check_name = "hessian_estimates";
  rep.inputs = {{"params", params.to_json()}, {"L", T.L}, {"epsilon", T.epsilon}, {"r", r}};
  rep.tolerance = 0.0;
  rep.lhs = {Q.sup_diff, Q.grad_diff, Q.hess};
  rep.rhs = std::isfinite(threshold) ? json(threshold) : json("unbounded");
  rep.margin = threshold - std::max({Q.sup_diff, Q.grad_diff, Q.hess});
  rep.resolution = {{"mesh_spacing", spacing}, {"quantities", Q.to_json()}};
  rep.notes = "lhs = [sup |h - b|, mean |grad(h - b)|^2, mean |Hess h|^2], worst of both signs";
  return rep.finalize();
}

// ---------------------------------------------------------------------------
// Warped-cylinder ladders

struct LadderRung {
  double amplitude = 0.0;
  double L = 100.0;
  double epsilon = 0.01;

  json to_json() const { return json{{"amplitude", amplitude}, {"L", L}, {"epsilon", epsilon}}; }
};

// dx^2 + (1 + a sin x)^2 dtheta^2 with q+- at distance L from p = (0, pi); delta = a / (1 - a).
struct CylinderCase {
  std::unique_ptr<ChartManifold<2>> M;
  std::unique_ptr<DistanceSolver<2>> S;
  TriangleConfig<2> T;
  BakryEmeryParams params;
};

inline CylinderCase cylinder_case(const LadderRung& rung, double m = 1.0, const DistanceSettings& ds = {}) {
  if (!(rung.amplitude >= 0.0 && rung.amplitude < 1.0)) throw DomainError("cylinder_case: amplitude must be in [0, 1)");
  CylinderCase c;
  c.M = std::make_unique<ChartManifold<2>>(rung.amplitude == 0.0
                                               ? catalog::cylinder(1.0, rung.L + 10.0)
                                               : catalog::warped_product(rung.amplitude, 1.0, rung.L + 10.0));
  c.S = std::make_unique<DistanceSolver<2>>(*c.M, ds);
  const Point<2> p(Vec<2>(0.0, num::pi));
  c.T = TriangleConfig<2>::make(*c.S, p, Point<2>(Vec<2>(rung.L, num::pi)), Point<2>(Vec<2>(-rung.L, num::pi)),
                                0.999 * rung.L, rung.epsilon);
  c.params = {m, rung.amplitude / (1.0 - rung.amplitude), 0.0};
  return c;
}

// Trend of one scalar per rung; at least three rungs and a 10% drop per rung by default.
inline VerificationReport ladder_report(const std::string& name, const std::vector<LadderRung>& rungs,
                                        const std::function<double(const CylinderCase&)>& quantity,
                                        double min_drop = 0.1) {
  if (rungs.size() < 3) throw DomainError("ladder_report: need at least three rungs");
  std::vector<double> values;
  json rj = json::array();
  for (const auto& r : rungs) {
    const auto c = cylinder_case(r);
    values.push_back(quantity(c));
    rj.push_back(r.to_json());
  }
  auto rep = ladder_trend(name, values, min_drop);
  rep.inputs["rungs"] = rj;
  rep.resolution = {{"rungs", rungs.size()}};
  return rep;
}

inline std::vector<LadderRung> default_ladder() {
  return {{0.02, 50.0, 0.04}, {0.01, 100.0, 0.02}, {0.005, 200.0, 0.01}};
}

}  // namespace belab
