#pragma once

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <toml.hpp>

#include "belab/catalog.hpp"
#include "belab/errors.hpp"
#include "belab/expression.hpp"
#include "belab/geometry.hpp"

namespace belab {

using AnyManifold = std::variant<ChartManifold<2>, ChartManifold<3>>;

namespace io {

inline std::string where(const toml::node& n) {
  const auto& s = n.source();
  if (s.begin.line == 0) return "";
  return " (line " + std::to_string(s.begin.line) + ")";
}

[[noreturn]] inline void bad_key(std::string_view ctx, std::string_view key, const std::string& why,
                                 const toml::node* n = nullptr) {
  std::string msg = std::string(ctx) + (ctx.empty() ? "" : ".") + std::string(key) + ": " + why;
  if (n) msg += where(*n);
  throw ConfigError(msg);
}

inline std::optional<double> opt_real(const toml::table& t, std::string_view key,
                                      std::string_view ctx = "") {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (auto v = n->value<double>()) return *v;
  bad_key(ctx, key, "expected a number", n);
}

inline double real(const toml::table& t, std::string_view key, double def, std::string_view ctx = "") {
  return opt_real(t, key, ctx).value_or(def);
}

inline double required_real(const toml::table& t, std::string_view key, std::string_view ctx = "") {
  if (auto v = opt_real(t, key, ctx)) return *v;
  bad_key(ctx, key, "missing required number");
}

inline std::int64_t integer(const toml::table& t, std::string_view key, std::int64_t def,
                            std::string_view ctx = "") {
  const toml::node* n = t.get(key);
  if (!n) return def;
  if (auto v = n->as_integer()) return v->get();
  bad_key(ctx, key, "expected an integer", n);
}

inline bool boolean(const toml::table& t, std::string_view key, bool def, std::string_view ctx = "") {
  const toml::node* n = t.get(key);
  if (!n) return def;
  if (auto v = n->as_boolean()) return v->get();
  bad_key(ctx, key, "expected true or false", n);
}

inline std::string string(const toml::table& t, std::string_view key, const std::string& def,
                          std::string_view ctx = "") {
  const toml::node* n = t.get(key);
  if (!n) return def;
  if (auto v = n->as_string()) return v->get();
  bad_key(ctx, key, "expected a string", n);
}

inline std::vector<double> reals(const toml::table& t, std::string_view key, std::string_view ctx = "") {
  const toml::node* n = t.get(key);
  if (!n) return {};
  const toml::array* a = n->as_array();
  if (!a) bad_key(ctx, key, "expected an array of numbers", n);
  std::vector<double> out;
  for (const auto& e : *a) {
    auto v = e.value<double>();
    if (!v) bad_key(ctx, key, "expected an array of numbers", &e);
    out.push_back(*v);
  }
  return out;
}

inline const toml::table* subtable(const toml::table& t, std::string_view key, std::string_view ctx = "") {
  const toml::node* n = t.get(key);
  if (!n) return nullptr;
  if (auto s = n->as_table()) return s;
  bad_key(ctx, key, "expected a table", n);
}

template <int N>
Vec<N> vec(const std::vector<double>& v, std::string_view ctx, std::string_view key) {
  if (static_cast<int>(v.size()) != N)
    bad_key(ctx, key, "expected " + std::to_string(N) + " components");
  Vec<N> out;
  for (int i = 0; i < N; ++i) out[i] = v[static_cast<std::size_t>(i)];
  return out;
}

// Numbers or expression strings in the coordinates.
template <int N>
Expression scalar_expression(const toml::node& n, std::string_view ctx, std::string_view key) {
  if (auto s = n.as_string()) {
    try {
      return compile_coordinate_expression(s->get(), N);
    } catch (const ConfigError& e) {
      bad_key(ctx, key, e.what(), &n);
    }
  }
  if (auto v = n.value<double>()) {
    std::ostringstream os;
    os.precision(17);
    os << *v;
    return compile_coordinate_expression("(" + os.str() + ")", N);
  }
  bad_key(ctx, key, "expected a number or an expression string", &n);
}

// X given as an array of numbers (constant) or expression strings.
template <int N>
CovectorField<N> covector(const toml::table& t, std::string_view key, std::string_view ctx) {
  const toml::node* n = t.get(key);
  if (!n) return {};
  const toml::array* a = n->as_array();
  if (!a || static_cast<int>(a->size()) != N)
    bad_key(ctx, key, "expected an array of " + std::to_string(N) + " components", n);
  bool all_numbers = true;
  for (const auto& e : *a) all_numbers = all_numbers && e.value<double>().has_value();
  if (all_numbers) {
    Vec<N> c;
    for (int i = 0; i < N; ++i) c[i] = *(*a)[static_cast<std::size_t>(i)].value<double>();
    return CovectorField<N>::constant(c);
  }
  std::vector<Expression> ex;
  for (const auto& e : *a) ex.push_back(scalar_expression<N>(e, ctx, key));
  CovectorField<N> F;
  F.value = [ex](const Vec<N>& x) -> Vec<N> {
    Vec<N> v;
    for (int i = 0; i < N; ++i) v[i] = ex[static_cast<std::size_t>(i)](x);
    return v;
  };
  return F;
}

inline DerivativeSettings derivative_settings(const toml::table* t, std::string_view ctx,
                                              DerivativeSettings s = {}) {
  if (!t) return s;
  const std::string mode = string(*t, "mode", "", ctx);
  if (mode == "closed-form") s.mode = DerivativeMode::ClosedForm;
  else if (mode == "finite-difference") s.mode = DerivativeMode::FiniteDifference;
  else if (!mode.empty()) bad_key(ctx, "mode", "expected \"closed-form\" or \"finite-difference\"", t->get("mode"));
  s.step = real(*t, "step", s.step, ctx);
  if (!(s.step > 0.0 && s.step < 0.1)) bad_key(ctx, "step", "must lie in (0, 0.1)", t->get("step"));
  s.richardson = boolean(*t, "richardson", s.richardson, ctx);
  return s;
}

template <int N>
ChartManifold<N> user_manifold(const toml::table& t, const std::string& ctx) {
  ChartManifold<N> M;
  M.name = string(t, "name", "user", ctx);
  Chart<N> c;
  c.lo = vec<N>(reals(t, "lo", ctx), ctx, "lo");
  c.hi = vec<N>(reals(t, "hi", ctx), ctx, "hi");
  for (int k = 0; k < N; ++k)
    if (!(c.hi[k] > c.lo[k])) bad_key(ctx, "hi", "each hi must exceed lo", t.get("hi"));
  const toml::node* pn = t.get("periodic");
  if (pn) {
    const toml::array* pa = pn->as_array();
    if (!pa || static_cast<int>(pa->size()) != N)
      bad_key(ctx, "periodic", "expected " + std::to_string(N) + " booleans", pn);
    for (int k = 0; k < N; ++k) {
      auto b = (*pa)[static_cast<std::size_t>(k)].value<bool>();
      if (!b) bad_key(ctx, "periodic", "expected booleans", pn);
      c.periodic[static_cast<std::size_t>(k)] = *b;
    }
  }
  const toml::node* mn = t.get("metric");
  if (!mn) bad_key(ctx, "metric", "missing required matrix of expressions");
  const toml::array* rows = mn->as_array();
  if (!rows || static_cast<int>(rows->size()) != N)
    bad_key(ctx, "metric", "expected " + std::to_string(N) + " rows", mn);
  std::vector<Expression> g;
  for (const auto& r : *rows) {
    const toml::array* row = r.as_array();
    if (!row || static_cast<int>(row->size()) != N)
      bad_key(ctx, "metric", "expected rows of " + std::to_string(N) + " entries", &r);
    for (const auto& e : *row) g.push_back(scalar_expression<N>(e, ctx, "metric"));
  }
  c.metric = [g](const Vec<N>& x) -> Mat<N> {
    Mat<N> m;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) m(i, j) = g[static_cast<std::size_t>(i * N + j)](x);
    return m;
  };
  M.charts.push_back(c);
  M.derivatives.mode = DerivativeMode::FiniteDifference;
  M.derivatives = derivative_settings(subtable(t, "derivatives", ctx), ctx + ".derivatives", M.derivatives);
  apply_field(M, covector<N>(t, "X", ctx));
  return M;
}

template <int N>
ChartManifold<N> catalog_manifold(const std::string& name, const toml::table& opt,
                                  const std::string& ctx) {
  ChartManifold<N> M;
  if (name == "flat-torus") {
    M = catalog::flat_torus<N>();
  } else if constexpr (N == 2) {
    if (name == "round-sphere") M = catalog::round_sphere();
    else if (name == "cylinder")
      M = catalog::cylinder(real(opt, "radius", 1.0, ctx), real(opt, "half_length", 20.0, ctx));
    else if (name == "warped-product")
      M = catalog::warped_product(real(opt, "amplitude", 0.01, ctx), real(opt, "wavenumber", 1.0, ctx),
                                  real(opt, "half_length", 20.0, ctx));
    else
      throw ConfigError("manifold: unknown 2-dimensional catalog name '" + name + "'");
  } else {
    if (name == "s1xs2") M = catalog::s1xs2(real(opt, "radius", 1.0, ctx));
    else throw ConfigError("manifold: unknown 3-dimensional catalog name '" + name + "'");
  }
  if (opt.get("X")) apply_field(M, covector<N>(opt, "X", ctx));
  if (auto c = opt_real(opt, "X_rotation", ctx)) {
    if constexpr (N == 2) {
      if (name != "round-sphere") bad_key(ctx, "X_rotation", "only defined on round-sphere");
      apply_field(M, catalog::sphere_rotation(*c));
    } else {
      bad_key(ctx, "X_rotation", "only defined on round-sphere");
    }
  }
  M.derivatives = derivative_settings(subtable(opt, "derivatives", ctx), ctx + ".derivatives", M.derivatives);
  return M;
}

inline int catalog_dimension(const std::string& name, const toml::table& opt, const std::string& ctx) {
  if (name == "s1xs2") return 3;
  if (name == "flat-torus") {
    const auto d = integer(opt, "dimension", 2, ctx);
    if (d != 2 && d != 3) bad_key(ctx, "dimension", "flat-torus supports dimension 2 or 3", opt.get("dimension"));
    return static_cast<int>(d);
  }
  if (name == "round-sphere" || name == "cylinder" || name == "warped-product") return 2;
  throw ConfigError("manifold: unknown catalog name '" + name +
                    "' (expected flat-torus, round-sphere, cylinder, s1xs2, warped-product or a .toml path)");
}

inline toml::table parse_file(const std::string& path) {
  try {
    return toml::parse_file(path);
  } catch (const toml::parse_error& e) {
    const auto& s = e.source();
    throw ConfigError(path + ":" + std::to_string(s.begin.line) + ":" + std::to_string(s.begin.column) +
                      ": " + std::string(e.description()));
  }
}

inline toml::table parse_text(std::string_view text, const std::string& label = "<string>") {
  try {
    return toml::parse(text, label);
  } catch (const toml::parse_error& e) {
    const auto& s = e.source();
    throw ConfigError(label + ":" + std::to_string(s.begin.line) + ":" + std::to_string(s.begin.column) +
                      ": " + std::string(e.description()));
  }
}

}  // namespace io

inline AnyManifold manifold_from_table(const toml::table& t, const std::string& ctx = "manifold") {
  const auto n = io::integer(t, "dimension", 0, ctx);
  AnyManifold out;
  if (n == 2) out = io::user_manifold<2>(t, ctx);
  else if (n == 3) out = io::user_manifold<3>(t, ctx);
  else io::bad_key(ctx, "dimension", "expected 2 or 3", t.get("dimension"));
  std::visit([](const auto& M) { validate_manifold(M); }, out);
  return out;
}

inline AnyManifold load_manifold_file(const std::string& path) {
  return manifold_from_table(io::parse_file(path), path);
}

// A catalog name, or a path to a manifold description.
inline AnyManifold resolve_manifold(const std::string& spec, const toml::table& options,
                                    const std::filesystem::path& base_dir = {}) {
  if (spec.size() > 5 && spec.substr(spec.size() - 5) == ".toml") {
    std::filesystem::path p(spec);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return load_manifold_file(p.string());
  }
  const std::string ctx = "manifold_options";
  AnyManifold out;
  if (io::catalog_dimension(spec, options, ctx) == 2)
    out = io::catalog_manifold<2>(spec, options, ctx);
  else
    out = io::catalog_manifold<3>(spec, options, ctx);
  std::visit([](const auto& M) { validate_manifold(M); }, out);
  return out;
}

}  // namespace belab
