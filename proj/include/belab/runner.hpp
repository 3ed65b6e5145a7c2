#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <toml.hpp>

#include "belab/catalog.hpp"
#include "belab/drift_pde.hpp"
#include "belab/errors.hpp"
#include "belab/expression.hpp"
#include "belab/manifold_io.hpp"
#include "belab/modelspace.hpp"
#include "belab/report.hpp"
#include "belab/topology.hpp"
#include "belab/verify.hpp"

namespace belab::cli {

namespace fs = std::filesystem;

enum ExitCode : int { Ok = 0, CheckFailed = 1, BadInput = 2, Hypothesis = 3, Solver = 4 };

// Keys looked up in the check's own table first, then at the top level.
struct CheckContext {
  std::string name;
  const toml::table* root = nullptr;
  const toml::table* section = nullptr;
  fs::path base_dir;
  std::uint64_t seed = 1;

  const toml::table& table_for(std::string_view key) const {
    if (section && section->get(key)) return *section;
    return *root;
  }
  std::string ctx_for(std::string_view key) const {
    return section && section->get(key) ? name : std::string();
  }
  bool has(std::string_view key) const { return (section && section->get(key)) || root->get(key); }
  double real(std::string_view key, double def) const { return io::real(table_for(key), key, def, ctx_for(key)); }
  double required_real(std::string_view key) const {
    if (!has(key)) io::bad_key(name, key, "missing required number");
    return io::required_real(table_for(key), key, ctx_for(key));
  }
  int integer(std::string_view key, int def) const {
    return static_cast<int>(io::integer(table_for(key), key, def, ctx_for(key)));
  }
  std::string string(std::string_view key, const std::string& def) const {
    return io::string(table_for(key), key, def, ctx_for(key));
  }
  std::vector<double> reals(std::string_view key) const { return io::reals(table_for(key), key, ctx_for(key)); }
  const toml::table* subtable(std::string_view key) const {
    return io::subtable(table_for(key), key, ctx_for(key));
  }
  const toml::node* node(std::string_view key) const { return table_for(key).get(key); }

  double positive(std::string_view key, double def) const {
    const double v = real(key, def);
    if (!(v > 0.0)) io::bad_key(name, key, "must be > 0", node(key));
    return v;
  }
  int at_least(std::string_view key, int def, int lo) const {
    const int v = integer(key, def);
    if (v < lo) io::bad_key(name, key, "must be >= " + std::to_string(lo), node(key));
    return v;
  }
};

namespace detail {

inline const toml::table kEmpty{};

template <int N>
Point<N> point_key(const CheckContext& c, std::string_view key, const ChartManifold<N>& M) {
  if (!c.has(key)) {
    const auto& ch = M.chart(0);
    return Point<N>(Vec<N>(0.5 * (ch.lo + ch.hi)));
  }
  return Point<N>(io::vec<N>(c.reals(key), c.name, key));
}

inline AnyManifold manifold(const CheckContext& c) {
  if (!c.has("manifold")) io::bad_key(c.name, "manifold", "missing catalog name or manifold file");
  const toml::table* opt = c.subtable("manifold_options");
  // options follow the manifold name they belong to
  if (c.section && c.section->get("manifold") && !c.section->get("manifold_options")) opt = nullptr;
  return resolve_manifold(c.string("manifold", ""), opt ? *opt : kEmpty, c.base_dir);
}

// Missing parameters come from the manifold on the validation grid.
template <int N>
BakryEmeryParams params(const CheckContext& c, const ChartManifold<N>& M, double default_m = 1.0,
                        int default_per_axis = 24) {
  const toml::table* t = c.subtable("params");
  const toml::table& p = t ? *t : kEmpty;
  const std::string ctx = c.name.empty() ? "params" : c.name + ".params";
  BakryEmeryParams out;
  out.m = io::real(p, "m", default_m, ctx);
  const int per_axis = static_cast<int>(io::integer(p, "validation_per_axis", default_per_axis, ctx));
  std::vector<Point<N>> grid;
  if (!p.get("delta") || !p.get("C")) grid = sample_grid(M, per_axis);
  out.delta = p.get("delta") ? io::real(p, "delta", 0.0, ctx) : required_delta(M, out.m, grid);
  out.C = p.get("C") ? io::real(p, "C", 0.0, ctx) : sup_X_norm(M, grid);
  try {
    out.validate();
  } catch (const DomainError& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  return out;
}

// Triangle from [triangle]; cylinder-like manifolds default to q+- = (+-L, pi) around p = (0, pi).
template <int N>
TriangleConfig<N> triangle(const CheckContext& c, const DistanceSolver<N>& S) {
  const toml::table* t = c.subtable("triangle");
  const toml::table& tt = t ? *t : kEmpty;
  const std::string ctx = "triangle";
  const double L = io::real(tt, "L", 100.0, ctx);
  if (!(L > 0.0)) io::bad_key(ctx, "L", "must be > 0", tt.get("L"));
  const double Lparam = io::real(tt, "L_parameter", 0.999 * L, ctx);
  const double eps = io::real(tt, "epsilon", 0.01, ctx);
  Point<N> p, qp, qm;
  if (tt.get("p") || tt.get("q_plus") || tt.get("q_minus")) {
    p = Point<N>(io::vec<N>(io::reals(tt, "p", ctx), ctx, "p"));
    qp = Point<N>(io::vec<N>(io::reals(tt, "q_plus", ctx), ctx, "q_plus"));
    qm = Point<N>(io::vec<N>(io::reals(tt, "q_minus", ctx), ctx, "q_minus"));
  } else {
    Vec<N> base = Vec<N>::Zero();
    base[N - 1] = num::pi;
    Vec<N> e = Vec<N>::Zero();
    e[0] = L;
    p = Point<N>(base);
    qp = Point<N>(Vec<N>(base + e));
    qm = Point<N>(Vec<N>(base - e));
  }
  for (const auto* q : {&p, &qp, &qm})
    if (!S.manifold().inside(*q))
      throw ConfigError("triangle: point outside the manifold chart (raise manifold_options.half_length?)");
  return TriangleConfig<N>::make(S, p, qp, qm, Lparam, eps);
}

inline std::vector<LadderRung> rungs(const CheckContext& c) {
  if (!c.has("rungs")) return default_ladder();
  const toml::node* n = c.node("rungs");
  const toml::array* a = n->as_array();
  if (!a) io::bad_key(c.name, "rungs", "expected an array of [amplitude, L, epsilon]", n);
  std::vector<LadderRung> out;
  for (const auto& e : *a) {
    const toml::array* r = e.as_array();
    if (!r || r->size() != 3) io::bad_key(c.name, "rungs", "expected [amplitude, L, epsilon]", &e);
    double v[3];
    for (std::size_t k = 0; k < 3; ++k) {
      auto x = (*r)[k].value<double>();
      if (!x) io::bad_key(c.name, "rungs", "expected numbers", &e);
      v[k] = *x;
    }
    out.push_back({v[0], v[1], v[2]});
  }
  if (out.size() < 3) io::bad_key(c.name, "rungs", "need at least three rungs", n);
  return out;
}

// f given as an expression in chart-0 coordinates.
template <int N>
PointFunction<N> point_function(const CheckContext& c, std::string_view key, const ChartManifold<N>& M,
                                const std::string& def) {
  const toml::node* n = c.has(key) ? c.node(key) : nullptr;
  const Expression ex = n ? io::scalar_expression<N>(*n, c.name, key) : compile_coordinate_expression(def, N);
  return [ex, &M](const Point<N>& q) { return ex(M.to_chart(M.canonical(q), 0).x); };
}

template <class F>
VerificationReport on_manifold(const CheckContext& c, F&& f) {
  const AnyManifold any = manifold(c);
  return std::visit([&](const auto& M) { return f(M); }, any);
}

inline double margin_of(const std::vector<VerificationReport>& reps) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : reps) m = std::min(m, r.margin);
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Checks

struct CheckSpec {
  std::string name;
  std::string suite;
  std::vector<std::string> keys;  // keys allowed in the [name] section
  std::function<VerificationReport(const CheckContext&)> run;
};

namespace checks {

inline VerificationReport mean_curvature(const CheckContext& c, bool difference) {
  return detail::on_manifold(c, [&](const auto& M) {
    constexpr int N = std::decay_t<decltype(M)>::dim;
    const DistanceSolver<N> S(M);
    const auto params = detail::params(c, M);
    RaySettings rs;
    rs.steps = c.at_least("steps", 400, 4);
    rs.seed = c.seed;
    rs.tolerance = c.real("tolerance", 1e-6);
    const auto p = detail::point_key<N>(c, "p", M);
    const int rays = c.at_least("rays", 64, 1);
    const double rho_max = c.positive("rho_max", 2.0);
    return difference ? check_mean_curvature_difference(S, params, p, rays, rho_max, rs)
                      : check_mean_curvature_comparison(S, params, p, rays, rho_max, rs);
  });
}

inline VerificationReport area_volume(const CheckContext& c) {
  return detail::on_manifold(c, [&](const auto& M) {
    constexpr int N = std::decay_t<decltype(M)>::dim;
    const DistanceSolver<N> S(M);
    const auto params = detail::params(c, M);
    AreaVolumeSettings as;
    as.fan = c.at_least("fan", 64, 4);
    as.refine = c.at_least("refine", 8, 2);
    as.tolerance = c.real("tolerance", 1e-6);
    const int points = c.at_least("points", 50, 2);
    const double rho_max = c.positive("rho_max", 2.0);
    std::vector<double> grid;
    for (int k = 1; k <= points; ++k) grid.push_back(rho_max * k / points);
    return check_area_volume_comparison(S, params, detail::point_key<N>(c, "p", M), grid, as);
  });
}

inline VerificationReport abresch_gromoll(const CheckContext& c) {
  return detail::on_manifold(c, [&](const auto& M) {
    constexpr int N = std::decay_t<decltype(M)>::dim;
    const DistanceSolver<N> S(M);
    const auto params = detail::params(c, M);
    const auto T = detail::triangle(c, S);
    const double r = c.positive("r", 2.0);
    const auto ball = ball_mesh(S, T.p, r, c.positive("spacing", 0.25));
    ExcessSettings es;
    es.tolerance = c.real("tolerance", 1e-9);
    return check_abresch_gromoll(S, params, T, r, ball_samples(ball), es);
  });
}

// Second-order decay of the discrete Bochner identity at a point.
inline VerificationReport bochner(const CheckContext& c) {
  return detail::on_manifold(c, [&](const auto& M) {
    constexpr int N = std::decay_t<decltype(M)>::dim;
    const double m = c.positive("m", 1.0);
    const Vec<N> x0 = detail::point_key<N>(c, "p", M).x;
    const toml::node* n = c.has("u") ? c.node("u") : nullptr;
    const Expression u = n ? io::scalar_expression<N>(*n, c.name, "u") : compile_coordinate_expression("sin(x)", N);
    const double h = c.positive("spacing", 0.02);
    const double final_max = c.real("final_max", 1e-3);
    const double min_order = c.real("min_order", 1.8);
    std::vector<double> res;
    for (double s : {h, 0.5 * h}) {
      const auto f = MeshField<N>::sample(Grid<N>::patch(0, x0, s, 4), [&](const Vec<N>& x) { return u(x); });
      typename Grid<N>::Index mid;
      for (int k = 0; k < N; ++k) mid[k] = f.grid.count[k] / 2;
      res.push_back(bochner_residual(M, m, f, f.grid.index(mid)));
    }
    const double a = std::abs(res[0]), b = std::abs(res[1]);
    // residuals at round-off level carry no order information
    const double order = a < 1e-10 ? std::numeric_limits<double>::infinity() : std::log2(a / std::max(b, 1e-300));
    VerificationReport rep;
    rep.check_name = "bochner_residual";
    rep.inputs = {{"m", m}, {"u", n ? n->value<std::string>().value_or("constant") : "sin(x)"},
                  {"p", std::vector<double>(x0.data(), x0.data() + N)}, {"spacings", {h, 0.5 * h}}};
    rep.lhs = res;
    rep.rhs = {{"final_max", final_max}, {"min_order", min_order}};
    rep.margin = std::min(final_max - b, std::isfinite(order) ? order - min_order : 1.0);
    rep.tolerance = 0.0;
    rep.resolution = {{"spacings", {h, 0.5 * h}}, {"observed_order", std::isfinite(order) ? json(order) : json("exact")}};
    rep.notes = "margin = min(final_max - |residual at h/2|, observed order - min_order)";
    return rep.finalize();
  });
}

inline VerificationReport hessian(const CheckContext& c) {
  return detail::on_manifold(c, [&](const auto& M) {
    constexpr int N = std::decay_t<decltype(M)>::dim;
    const DistanceSolver<N> S(M);
    const auto params = detail::params(c, M);
    const auto T = detail::triangle(c, S);
    return check_hessian_estimates(S, params, T, c.positive("r", 2.0), c.positive("spacing", 0.1),
                                   c.real("threshold", std::numeric_limits<double>::infinity()));
  });
}

inline VerificationReport hessian_ladder(const CheckContext& c) {
  const auto rungs = detail::rungs(c);
  const double r = c.positive("r", 2.0), h = c.positive("spacing", 0.1);
  const double drop = c.real("min_drop", 0.1);
  std::vector<double> q[3];
  json rj = json::array();
  for (const auto& rung : rungs) {
    const auto cc = cylinder_case(rung);
    const auto Q = hessian_estimates(*cc.S, cc.T, r, h);
    q[0].push_back(Q.sup_diff);
    q[1].push_back(Q.grad_diff);
    q[2].push_back(Q.hess);
    rj.push_back(rung.to_json());
  }
  const char* names[3] = {"sup_diff", "grad_diff", "hess"};
  std::vector<VerificationReport> parts;
  VerificationReport rep;
  rep.check_name = "hessian_ladder";
  rep.inputs = {{"rungs", rj}, {"r", r}, {"min_drop", drop}};
  for (int k = 0; k < 3; ++k) {
    parts.push_back(ladder_trend(names[k], q[k], drop));
    rep.lhs[names[k]] = q[k];
    rep.rhs[names[k]] = parts.back().rhs;
  }
  rep.margin = detail::margin_of(parts);
  rep.resolution = {{"mesh_spacing", h}, {"rungs", rungs.size()}};
  rep.notes = "each quantity at most (1 - min_drop) times its value on the previous rung";
  return rep.finalize();
}

inline VerificationReport segment(const CheckContext& c) {
  return detail::on_manifold(c, [&](const auto& M) {
    constexpr int N = std::decay_t<decltype(M)>::dim;
    const DistanceSolver<N> S(M);
    const auto params = detail::params(c, M);
    const auto p = detail::point_key<N>(c, "p", M);
    const double r = c.positive("r", 1.0);
    SegmentSettings ss;
    ss.seed = c.seed;
    ss.spacing = c.positive("spacing", 0.05);
    ss.fan = c.at_least("fan", 64, 4);
    ss.radial_steps = c.at_least("radial_steps", 64, 4);
    ss.geodesic_samples = c.at_least("geodesic_samples", 17, 3);
    ss.z = c.real("z", 2.326);
    const auto f = detail::point_function<N>(c, "f", M, "1");
    auto rep = check_segment_inequality<N>(S, params, p, r, f, c.at_least("trials", 10000, 2),
                                           default_segment_domains(S, p, r), ss);
    rep.inputs["f"] = c.has("f") ? c.node("f")->value<std::string>().value_or("constant") : "1";
    return rep;
  });
}

inline VerificationReport segment_quantities(const CheckContext& c) {
  return detail::on_manifold(c, [&](const auto& M) {
    constexpr int N = std::decay_t<decltype(M)>::dim;
    const DistanceSolver<N> S(M);
    const auto params = detail::params(c, M);
    const auto T = detail::triangle(c, S);
    SegmentQuantitySettings qs;
    qs.candidates = c.at_least("candidates", 8, 1);
    qs.rho_star = c.positive("rho_star", 0.05);
    qs.threshold = c.real("threshold", std::numeric_limits<double>::infinity());
    qs.seed = c.seed;
    qs.triple.seed = c.seed;
    qs.triple.spacing = c.positive("spacing", 0.1);
    return check_segment_quantities(S, params, T, c.positive("r", 2.0), c.at_least("triples", 3, 1), qs);
  });
}

inline VerificationReport pythagoras(const CheckContext& c) {
  return detail::on_manifold(c, [&](const auto& M) {
    constexpr int N = std::decay_t<decltype(M)>::dim;
    const DistanceSolver<N> S(M);
    const auto params = detail::params(c, M);
    const auto T = detail::triangle(c, S);
    PythagorasSettings ps;
    ps.spacing = c.positive("spacing", 0.1);
    ps.threshold = c.real("threshold", 0.05);
    ps.seed = c.seed;
    return check_pythagoras_defect(S, params, T, c.positive("r", 2.0), c.at_least("triples", 8, 1), ps);
  });
}

inline VerificationReport almost_split(const CheckContext& c) {
  return detail::on_manifold(c, [&](const auto& M) {
    constexpr int N = std::decay_t<decltype(M)>::dim;
    const DistanceSolver<N> S(M);
    const auto params = detail::params(c, M);
    const auto T = detail::triangle(c, S);
    SplittingSettings ss;
    ss.spacing = c.positive("spacing", 0.1);
    ss.points = c.at_least("points", 40, 2);
    ss.threshold = c.real("threshold", -1.0);
    ss.seed = c.seed;
    return check_almost_splitting(S, params, T, c.positive("r", 2.0), ss);
  });
}

inline VerificationReport projection(const CheckContext& c) {
  return detail::on_manifold(c, [&](const auto& M) {
    constexpr int N = std::decay_t<decltype(M)>::dim;
    const DistanceSolver<N> S(M);
    const auto params = detail::params(c, M);
    const auto T = detail::triangle(c, S);
    ProjectionSettings ps;
    ps.spacing = c.positive("spacing", 0.1);
    ps.threshold = c.real("threshold", std::numeric_limits<double>::infinity());
    return check_projection_smallness(S, params, T, c.positive("r", 2.0), ps);
  });
}

inline VerificationReport splitting_ladder(const CheckContext& c, bool projection_integral) {
  const double r = c.positive("r", 2.0), h = c.positive("spacing", 0.1);
  const std::uint64_t seed = c.seed;
  auto rep = ladder_report(projection_integral ? "projection_ladder" : "splitting_ladder", detail::rungs(c),
                           [&](const CylinderCase& cc) {
                             if (projection_integral) {
                               ProjectionSettings ps;
                               ps.spacing = h;
                               const auto q = check_projection_smallness(*cc.S, cc.params, cc.T, r, ps);
                               return q.lhs[0].get<double>() + q.lhs[1].get<double>();
                             }
                             SplittingSettings ss;
                             ss.spacing = h;
                             ss.seed = seed;
                             return check_almost_splitting(*cc.S, cc.params, cc.T, r, ss).lhs.get<double>();
                           },
                           c.real("min_drop", 0.1));
  rep.inputs["r"] = r;
  rep.resolution["mesh_spacing"] = h;
  return rep;
}

inline VerificationReport generator_bound(const CheckContext& c) {
  const int n = c.at_least("n", 2, 2);
  const double m = c.positive("m", 2.0), delta = c.real("delta", 0.0), C = c.real("C", 0.0);
  const double D = c.positive("D", 1.0), V = c.positive("V", num::pi);
  const double N = generator_bound_N(n, m, delta, C, D, V);
  VerificationReport rep;
  rep.check_name = "generator_bound";
  rep.inputs = {{"n", n}, {"m", m}, {"delta", delta}, {"C", C}, {"D", D}, {"V", V}};
  rep.lhs = N;
  rep.tolerance = c.real("tolerance", 1e-12);
  if (c.has("expected")) {
    const double e = c.required_real("expected");
    rep.rhs = e;
    rep.margin = rep.tolerance * std::max(1.0, std::abs(e)) - std::abs(N - e);
    rep.notes = "|N - expected| within tolerance";
  } else {
    rep.rhs = nullptr;
    rep.margin = std::isfinite(N) && N > 0.0 ? 0.0 : -1.0;
    rep.notes = "value report: N = volume estimate at 2D over V";
  }
  rep.resolution = {{"volume_estimate_2D", volume_estimate_bound(n, m, delta, C, 2.0 * D)}};
  return rep.finalize();
}

inline VerificationReport growth(const CheckContext& c) {
  const int rank = c.at_least("rank", 2, 1);
  std::vector<std::vector<long>> gens;
  if (c.has("generators")) {
    const toml::node* n = c.node("generators");
    const toml::array* a = n->as_array();
    if (!a) io::bad_key(c.name, "generators", "expected an array of integer vectors", n);
    for (const auto& e : *a) {
      const toml::array* g = e.as_array();
      if (!g) io::bad_key(c.name, "generators", "expected an array of integer vectors", &e);
      std::vector<long> v;
      for (const auto& x : *g) {
        auto i = x.value<std::int64_t>();
        if (!i || !x.is_integer()) io::bad_key(c.name, "generators", "expected integers", &x);
        v.push_back(static_cast<long>(*i));
      }
      gens.push_back(v);
    }
  } else {
    for (int k = 0; k < rank; ++k) {
      std::vector<long> e(static_cast<std::size_t>(rank), 0);
      e[static_cast<std::size_t>(k)] = 1;
      gens.push_back(e);
    }
  }
  GrowthSettings gs;
  gs.budget = static_cast<std::size_t>(c.at_least("budget", 5'000'000, 1));
  return growth_count_check(rank, gens, c.at_least("s_max", 20, 2), c.real("degree_bound", rank), gs);
}

// B along a delta grid shrinking to zero: nonincreasing and settled on B(0).
inline VerificationReport betti(const CheckContext& c) {
  const int n = c.at_least("n", 2, 2);
  const double m = c.positive("m", 2.0), C = c.real("C", 0.0), D = c.positive("D", 1.0);
  const double C0 = c.real("C0", default_C0(m, C));
  std::vector<double> deltas = c.has("deltas") ? c.reals("deltas") : std::vector<double>{0.1, 1e-2, 1e-3, 1e-4, 1e-6, 0.0};
  if (deltas.size() < 2) io::bad_key(c.name, "deltas", "need at least two values");
  for (std::size_t k = 1; k < deltas.size(); ++k)
    if (!(deltas[k] < deltas[k - 1])) io::bad_key(c.name, "deltas", "must be strictly decreasing");
  if (deltas.back() != 0.0) deltas.push_back(0.0);
  BettiSettings bs;
  bs.C = C;
  bs.r_max = c.at_least("r_max", 1000, 1);
  std::vector<int> B;
  json argmin = json::array();
  for (double d : deltas) {
    const auto b = betti_bound_detail(n, m, d, C0, D, bs);
    B.push_back(b.value);
    argmin.push_back(b.argmin_r);
  }
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < B.size(); ++k) margin = std::min(margin, static_cast<double>(B[k - 1] - B[k]));
  margin = std::min(margin, -std::abs(static_cast<double>(B[B.size() - 2] - B.back())));
  VerificationReport rep;
  rep.check_name = "betti_bound";
  rep.inputs = {{"n", n}, {"m", m}, {"C", C}, {"C0", C0}, {"D", D}, {"deltas", deltas}};
  rep.lhs = B;
  rep.rhs = B.back();
  rep.margin = margin;
  rep.tolerance = 0.0;
  rep.resolution = {{"r_max", bs.r_max}, {"argmin_r", argmin}};
  rep.notes = "B nonincreasing as delta decreases, smallest positive delta already at the delta = 0 value";
  return rep.finalize();
}

inline VerificationReport cheng_yau(const CheckContext& c) {
  return detail::on_manifold(c, [&](const auto& M) {
    constexpr int N = std::decay_t<decltype(M)>::dim;
    const std::string family = c.string("family", "eigenfunction");
    const double r1 = c.positive("r1", 1.0), r2 = c.positive("r2", 2.0);
    const auto p = detail::point_key<N>(c, "p", M);
    if (family == "eigenfunction") {
      const int per_axis = c.at_least("per_axis", 96, 8);
      const auto E = principal_eigenfunction(M, per_axis);
      const auto Mneg = M.with_negated_X();
      // validated on the eigenfunction's own nodes
      const auto params = detail::params(c, Mneg, 2.0, per_axis);
      MeshField<N> a(E.u0.grid);
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = -divergence_X(M, E.u0.grid.point(i));
      const DistanceSolver<N> S(Mneg);
      auto rep = cheng_yau_check(S, params, E.u0, a, ScalarFunction::identity(), r1, r2, p);
      rep.inputs["family"] = family;
      rep.resolution["eigen_residual"] = E.residual;
      return rep;
    }
    const double h = c.positive("spacing", 0.02);
    const int half = static_cast<int>(std::ceil((r2 + 0.2) / h));
    const Grid<N> G = Grid<N>::patch(0, p.x, h, half);
    const DistanceSolver<N> S(M);
    const auto params = detail::params(c, M);
    MeshField<N> u, a;
    if (family == "exponential") {
      const std::vector<double> dv = c.has("a0") ? c.reals("a0") : std::vector<double>(N, 0.0);
      Vec<N> a0 = c.has("a0") ? io::vec<N>(dv, c.name, "a0") : Vec<N>::Zero();
      if (!c.has("a0")) a0[0] = 0.6, a0[1] = -0.8;
      u = MeshField<N>::sample(G, [&](const Vec<N>& x) { return std::exp(a0.dot(x - p.x)); });
      a = MeshField<N>::sample(G, [&](const Vec<N>&) { return a0.squaredNorm(); });
    } else if (family == "constant") {
      const double v = c.positive("value", 1.0);
      u = MeshField<N>::sample(G, [&](const Vec<N>&) { return v; });
      a = MeshField<N>(G);
    } else {
      io::bad_key(c.name, "family", "expected eigenfunction, exponential or constant", c.node("family"));
    }
    auto rep = cheng_yau_check(S, params, u, a, ScalarFunction::identity(), r1, r2, p);
    rep.inputs["family"] = family;
    return rep;
  });
}

}  // namespace checks

inline const std::vector<CheckSpec>& registry() {
  static const std::vector<std::string> common{"manifold", "manifold_options", "params", "triangle"};
  auto with = [](std::vector<std::string> k) {
    k.insert(k.end(), common.begin(), common.end());
    return k;
  };
  static const std::vector<CheckSpec> R = {
      {"mean-curvature", "comparison", with({"p", "rays", "rho_max", "steps", "tolerance"}),
       [](const CheckContext& c) { return checks::mean_curvature(c, false); }},
      {"mean-curvature-difference", "comparison", with({"p", "rays", "rho_max", "steps", "tolerance"}),
       [](const CheckContext& c) { return checks::mean_curvature(c, true); }},
      {"area-volume", "comparison", with({"p", "points", "rho_max", "fan", "refine", "tolerance"}), checks::area_volume},
      {"abresch-gromoll", "excess", with({"r", "spacing", "tolerance"}), checks::abresch_gromoll},
      {"bochner", "hessian", with({"m", "p", "u", "spacing", "final_max", "min_order"}), checks::bochner},
      {"hessian", "hessian", with({"r", "spacing", "threshold"}), checks::hessian},
      {"hessian-ladder", "hessian", with({"rungs", "r", "spacing", "min_drop"}), checks::hessian_ladder},
      {"segment", "segment",
       with({"p", "r", "f", "trials", "spacing", "fan", "radial_steps", "geodesic_samples", "z"}), checks::segment},
      {"segment-quantities", "segment", with({"r", "triples", "candidates", "rho_star", "threshold", "spacing"}),
       checks::segment_quantities},
      {"pythagoras", "splitting", with({"r", "triples", "spacing", "threshold"}), checks::pythagoras},
      {"almost-split", "splitting", with({"r", "spacing", "points", "threshold"}), checks::almost_split},
      {"projection", "splitting", with({"r", "spacing", "threshold"}), checks::projection},
      {"splitting-ladder", "splitting", with({"rungs", "r", "spacing", "min_drop"}),
       [](const CheckContext& c) { return checks::splitting_ladder(c, false); }},
      {"projection-ladder", "splitting", with({"rungs", "r", "spacing", "min_drop"}),
       [](const CheckContext& c) { return checks::splitting_ladder(c, true); }},
      {"generator-bound", "topology", {"n", "m", "delta", "C", "D", "V", "expected", "tolerance"},
       checks::generator_bound},
      {"growth", "topology", {"rank", "generators", "s_max", "degree_bound", "budget"}, checks::growth},
      {"betti", "topology", {"n", "m", "C", "C0", "D", "deltas", "r_max"}, checks::betti},
      {"cheng-yau", "appendix", with({"family", "r1", "r2", "p", "per_axis", "spacing", "a0", "value"}),
       checks::cheng_yau},
  };
  return R;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> S{"comparison", "excess", "hessian", "segment",
                                          "splitting", "topology", "appendix", "all"};
  return S;
}

// Check names for a scenario: one check, or every check of a suite in registry order.
inline std::vector<std::string> expand_scenario(const std::string& scenario) {
  std::vector<std::string> out;
  for (const auto& s : registry())
    if (s.name == scenario || s.suite == scenario || scenario == "all") out.push_back(s.name);
  if (out.empty()) {
    std::string known;
    for (const auto& s : suite_names()) known += (known.empty() ? "" : ", ") + s;
    throw ConfigError("scenario: unknown check or suite '" + scenario + "' (suites: " + known + ")");
  }
  return out;
}

inline const CheckSpec& find_check(const std::string& name) {
  for (const auto& s : registry())
    if (s.name == name) return s;
  throw ConfigError("unknown check '" + name + "'");
}

struct RunConfig {
  toml::table table;
  fs::path path;
  std::string scenario;
  std::vector<std::string> checks;
  std::uint64_t seed = 1;
  fs::path output_dir = "belab_out";
};

inline std::uint64_t parse_seed(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || s[0] == '-') throw ConfigError(where + ": expected a non-negative integer seed, got '" + s + "'");
  return static_cast<std::uint64_t>(v);
}

inline RunConfig load_config(const fs::path& path, const char* env_seed = std::getenv("BELAB_SEED")) {
  RunConfig rc;
  rc.path = path;
  rc.table = io::parse_file(path.string());
  const auto& t = rc.table;
  static const std::set<std::string> top{"scenario", "manifold", "manifold_options", "params", "seed",
                                         "output_dir", "triangle"};
  for (const auto& [k, v] : t) {
    const std::string key(k.str());
    if (top.count(key)) continue;
    bool is_check = false;
    for (const auto& s : registry()) is_check = is_check || s.name == key;
    if (!is_check) io::bad_key("", key, "unknown key", &v);
    if (!v.is_table()) io::bad_key("", key, "check settings must be a table", &v);
    const auto& allowed = find_check(key).keys;
    for (const auto& [sk, sv] : *v.as_table())
      if (std::find(allowed.begin(), allowed.end(), std::string(sk.str())) == allowed.end())
        io::bad_key(key, sk.str(), "unknown key for this check", &sv);
  }
  rc.scenario = io::string(t, "scenario", "", "");
  if (rc.scenario.empty()) io::bad_key("", "scenario", "missing check or suite name");
  rc.checks = expand_scenario(rc.scenario);
  const auto seed = io::integer(t, "seed", 1, "");
  if (seed < 0) io::bad_key("", "seed", "must be >= 0", t.get("seed"));
  rc.seed = static_cast<std::uint64_t>(seed);
  if (env_seed && *env_seed) rc.seed = parse_seed(env_seed, "BELAB_SEED");
  const std::string out = io::string(t, "output_dir", "", "");
  if (!out.empty()) rc.output_dir = out;
  return rc;
}

struct CheckOutcome {
  std::string name;
  std::optional<VerificationReport> report;
  int error_code = Ok;
  std::string error;
  double seconds = 0.0;
};

inline CheckOutcome run_check(const RunConfig& rc, const std::string& name) {
  CheckOutcome o;
  o.name = name;
  const auto start = std::chrono::steady_clock::now();
  try {
    CheckContext c;
    c.name = name;
    c.root = &rc.table;
    if (const toml::node* s = rc.table.get(name)) c.section = s->as_table();
    c.base_dir = rc.path.parent_path();
    c.seed = rc.seed;
    o.report = find_check(name).run(c);
  } catch (const ConfigError& e) {
    o.error_code = BadInput, o.error = std::string("config error: ") + e.what();
  } catch (const DomainError& e) {
    o.error_code = BadInput, o.error = std::string("domain error: ") + e.what();
  } catch (const HypothesisViolation& e) {
    o.error_code = Hypothesis, o.error = std::string("hypothesis violation: ") + e.what();
  } catch (const SolverFailure& e) {
    o.error_code = Solver, o.error = std::string("solver failure: ") + e.what();
  } catch (const std::exception& e) {
    o.error_code = Solver, o.error = std::string("solver failure: ") + e.what();
  }
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return o;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + p.string());
  f << s;
}

// Runs every check of the config, writes one JSON report per check plus run_manifest.json.
inline int run(const RunConfig& rc, int jobs, std::ostream& log, std::ostream& err) {
  std::vector<CheckOutcome> out(rc.checks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rc.checks.size(); i = next++) out[i] = run_check(rc, rc.checks[i]);
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(rc.checks.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::error_code ec;
  fs::create_directories(rc.output_dir, ec);
  if (ec) throw ConfigError("output_dir: cannot create " + rc.output_dir.string() + ": " + ec.message());
  int status = Ok;
  json entries = json::array();
  for (const auto& o : out) {
    json e{{"check", o.name}, {"seconds", o.seconds}};
    if (o.report) {
      const std::string file = o.name + ".json";
      write_text(rc.output_dir / file, o.report->to_json().dump(2) + "\n");
      e["report"] = file;
      e["passed"] = o.report->passed;
      e["margin"] = o.report->margin;
      log << (o.report->passed ? "PASS " : "FAIL ") << o.name << "  margin " << o.report->margin << "\n";
      if (!o.report->passed && status == Ok) status = CheckFailed;
    } else {
      e["error"] = o.error;
      e["exit_code"] = o.error_code;
      err << "belab: " << o.name << ": " << o.error << "\n";
      log << "ERROR " << o.name << "\n";
      // the first error in check order decides the status
      if (status == Ok || status == CheckFailed) status = o.error_code;
    }
    entries.push_back(e);
  }
  json manifest{{"config", fs::absolute(rc.path).lexically_normal().string()},
                {"scenario", rc.scenario},
                {"seed", rc.seed},
                {"jobs", n},
                {"checks", entries},
                {"exit_code", status},
                {"timestamp", utc_timestamp()}};
  write_text(rc.output_dir / "run_manifest.json", manifest.dump(2) + "\n");
  return status;
}

// CSV of rho, ell, model mean curvature and G_r on (0, r].
inline std::string model_table(double d, double lambda, double r, int points = 100) {
  if (points < 1) throw DomainError("tables: points must be >= 1");
  if (!(r > 0.0)) throw DomainError("tables: r must be > 0");
  const ModelSpace model(d, lambda);
  const auto G = green_barrier(model, r);
  std::ostringstream os;
  os << std::setprecision(17);
  os << "rho,ell,H,G\n";
  for (int k = 1; k <= points; ++k) {
    const double rho = r * k / points;
    os << rho << "," << ell(model, rho) << "," << model_mean_curvature(model, rho) << "," << G.value(rho) << "\n";
  }
  return os.str();
}

}  // namespace belab::cli
