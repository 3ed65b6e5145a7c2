#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "belab/errors.hpp"
#include "belab/manifold_io.hpp"
#include "belab/modelspace.hpp"
#include "belab/report.hpp"

namespace belab {

// (r + 1)^m exp[sqrt(delta) (r^2 + r^3) h(sqrt(delta) r) + C] times the unweighted model ball volume.
inline double volume_estimate_bound(int n, double m, double delta, double C, double r) {
  if (n < 2) throw DomainError("volume_estimate_bound: n must be >= 2");
  if (!(m > 0.0) || !(delta >= 0.0) || !(C >= 0.0)) throw DomainError("volume_estimate_bound: need m > 0, delta, C >= 0");
  if (!(r >= 0.0)) throw DomainError("volume_estimate_bound: r must be >= 0");
  if (r == 0.0) return 0.0;
  const double sd = std::sqrt(delta);
  const double expo = sd * (r * r + r * r * r) * growth_function_h(m, C, sd * r) + C;
  return std::pow(r + 1.0, m) * std::exp(expo) * model_ball_volume(ModelSpace(n, -delta), r, false);
}

inline double generator_bound_N(int n, double m, double delta, double C, double D, double V) {
  if (!(V > 0.0)) throw DomainError("generator_bound_N: V must be > 0");
  if (!(D > 0.0)) throw DomainError("generator_bound_N: D must be > 0");
  return volume_estimate_bound(n, m, delta, C, 2.0 * D) / V;
}

// Word-ball sizes of a finitely generated subgroup of Z^rank.
struct GrowthSettings {
  std::size_t budget = 5'000'000;  // maximal number of stored lattice points
};

inline std::vector<std::size_t> growth_counts(int rank, const std::vector<std::vector<long>>& generators, int s_max,
                                              const GrowthSettings& settings = {}) {
  if (rank < 1) throw DomainError("growth_counts: rank must be >= 1");
  if (generators.empty()) throw DomainError("growth_counts: need at least one generator");
  if (s_max < 1) throw DomainError("growth_counts: s_max must be >= 1");
  for (const auto& g : generators)
    if (static_cast<int>(g.size()) != rank) throw DomainError("growth_counts: generator length differs from rank");
  std::set<std::vector<long>> seen{std::vector<long>(static_cast<std::size_t>(rank), 0)};
  std::vector<std::vector<long>> frontier{std::vector<long>(static_cast<std::size_t>(rank), 0)};
  std::vector<std::size_t> counts{1};
  for (int s = 1; s <= s_max; ++s) {
    std::vector<std::vector<long>> next;
    for (const auto& v : frontier)
      for (const auto& g : generators)
        for (long sign : {1L, -1L}) {
          std::vector<long> w = v;
          for (int k = 0; k < rank; ++k) w[static_cast<std::size_t>(k)] += sign * g[static_cast<std::size_t>(k)];
          if (seen.insert(w).second) {
            next.push_back(std::move(w));
            if (seen.size() > settings.budget)
              throw DomainError("growth_counts: enumeration overflow, more than " + std::to_string(settings.budget) +
                                " lattice points");
          }
        }
    frontier = std::move(next);
    counts.push_back(seen.size());
  }
  return counts;  // counts[s] = #Gamma(s)
}

// Least-squares slope of log #Gamma(s) against log s over the upper half of [1, s_max].
inline double growth_degree(const std::vector<std::size_t>& counts) {
  const int s_max = static_cast<int>(counts.size()) - 1;
  const int lo = std::max(1, s_max / 2);
  if (s_max - lo < 1) throw DomainError("growth_degree: need s_max >= 2");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int k = 0;
  for (int s = lo; s <= s_max; ++s, ++k) {
    const double x = std::log(static_cast<double>(s));
    const double y = std::log(static_cast<double>(counts[static_cast<std::size_t>(s)]));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

inline VerificationReport growth_count_check(int rank, const std::vector<std::vector<long>>& generators, int s_max,
                                             double degree_bound, const GrowthSettings& settings = {}) {
  const auto counts = growth_counts(rank, generators, s_max, settings);
  const double degree = growth_degree(counts);
  VerificationReport rep;
  rep.check_name = "growth_count";
  rep.inputs = {{"lattice_rank", rank}, {"generators", generators}, {"s_max", s_max}, {"degree_bound", degree_bound}};
  rep.lhs = degree;
  rep.rhs = degree_bound;
  rep.margin = degree_bound - degree;
  rep.tolerance = 1e-9;
  rep.resolution = {{"counts", counts}, {"fit_window", json::array({std::max(1, s_max / 2), s_max})},
                    {"budget", settings.budget}};
  rep.notes = "exact enumeration of word balls in Z^rank; degree from a log-log fit";
  return rep.finalize();
}

// C0 read as m log 2 + C.
inline double default_C0(double m, double C) { return m * std::log(2.0) + C; }

struct BettiSettings {
  double C = 0.0;  // drift bound entering h
  int r_max = 1000;
};

struct BettiBound {
  int value = 0;
  int argmin_r = 1;
  std::vector<int> per_r;  // floor(log R / log(2r + 1)) for r = 1..r_max
};

inline BettiBound betti_bound_detail(int n, double m, double delta, double C0, double D, const BettiSettings& s = {}) {
  if (!(D > 0.0)) throw DomainError("betti_bound_B: D must be > 0");
  if (s.r_max < 1) throw DomainError("betti_bound_B: r_max must be >= 1");
  BettiBound B;
  B.value = std::numeric_limits<int>::max();
  for (int r = 1; r <= s.r_max; ++r) {
    const double logR = log_bishop_gromov_ratio_bound(n, m, delta, s.C, C0, 0.5 * D, 2.0 * r * D + 0.5 * D);
    const int b = static_cast<int>(std::floor(logR / std::log(2.0 * r + 1.0)));
    B.per_r.push_back(b);
    if (b < B.value) {
      B.value = b;
      B.argmin_r = r;
    }
  }
  return B;
}

inline int betti_bound_B(int n, double m, double delta, double C0, double D, const BettiSettings& s = {}) {
  return betti_bound_detail(n, m, delta, C0, D, s).value;
}

// Near-horizon data summarised by constants.
struct HorizonHypotheses {
  int n = 3;
  double Lambda = 0.0;
  double kappa = 0.0;
  double lambda_chi = 0.0;  // lower eigenvalue bound of chi
  double C = 0.0;
  double D = 1.0;
  double V = 1.0;
  bool gradient_case = false;

  void validate() const {
    if (n < 2) throw ConfigError("horizon: n must be >= 2");
    if (!(D > 0.0)) throw ConfigError("horizon: D must be > 0");
    if (!(V > 0.0)) throw ConfigError("horizon: V must be > 0");
    if (!(C >= 0.0)) throw ConfigError("horizon: C must be >= 0");
    for (double v : {Lambda, kappa, lambda_chi})
      if (!std::isfinite(v)) throw ConfigError("horizon: Lambda, kappa and lambda_chi must be finite");
  }

  double effective_bound() const { return 2.0 * Lambda / n + 2.0 * kappa * lambda_chi; }
  double delta_effective() const { return std::max(0.0, -effective_bound()) / (n - 1); }

  static HorizonHypotheses from_toml(const toml::table& t, std::string_view ctx = "horizon") {
    HorizonHypotheses h;
    h.n = static_cast<int>(io::integer(t, "n", 3, ctx));
    h.Lambda = io::real(t, "Lambda", 0.0, ctx);
    h.kappa = io::real(t, "kappa", 0.0, ctx);
    h.lambda_chi = io::real(t, "lambda_chi", 0.0, ctx);
    h.C = io::real(t, "C", 0.0, ctx);
    h.D = io::required_real(t, "D", ctx);
    h.V = io::required_real(t, "V", ctx);
    h.gradient_case = io::boolean(t, "gradient_case", false, ctx);
    h.validate();
    return h;
  }

  json to_json() const {
    return json{{"n", n}, {"Lambda", Lambda}, {"kappa", kappa}, {"lambda_chi", lambda_chi}, {"C", C},
                {"D", D}, {"V", V}, {"gradient_case", gradient_case}};
  }
};

struct HorizonReport {
  json data;
  std::string table;
};

inline HorizonReport horizon_report(const HorizonHypotheses& h, const BettiSettings& bs = {}) {
  h.validate();
  const double m = 2.0;
  const double eff = h.effective_bound();
  const double delta = h.delta_effective();
  const double N = generator_bound_N(h.n, m, delta, h.C, h.D, h.V);
  const double C0 = default_C0(m, h.C);
  BettiSettings s = bs;
  s.C = h.C;
  const auto B = betti_bound_detail(h.n, m, delta, C0, h.D, s);
  const int ceiling = h.gradient_case ? h.n : h.n + 2;
  const char* threshold = "non-constructive threshold: the smallness of kappa_0 / delta_0 is not quantified";
  json j;
  j["hypotheses"] = h.to_json();
  j["kappa_lambda"] = h.kappa * h.lambda_chi;
  j["effective_bound"] = eff;
  j["delta_effective"] = delta;
  j["positive_bound"] = {
      {"holds", eff > 0.0},
      {"conclusion", eff > 0.0 ? "hypothesis of positive Bakry-Emery bound holds: pi_1 is finite (cited)"
                               : "not applicable"}};
  j["generator_bound_N"] = N;
  j["betti"] = {{"m", m},
                {"C0", C0},
                {"B", B.value},
                {"argmin_r", B.argmin_r},
                {"r_max", s.r_max},
                {"ceiling", ceiling},
                {"ceiling_rule", h.gradient_case ? "b_1 <= n (gradient case)" : "b_1 <= n + 2"},
                {"status", threshold}};
  j["cited"] = {{"connected_sum_exclusion", threshold}, {"almost_abelian", threshold},
                {"finitely_many_pi1_types", "cited, not computed"}};
  std::ostringstream os;
  os << std::setprecision(6);
  auto row = [&](const std::string& k, const std::string& v) { os << std::left << std::setw(26) << k << v << "\n"; };
  auto num = [](double v) {
    std::ostringstream o;
    o << std::setprecision(6) << v;
    return o.str();
  };
  row("n", std::to_string(h.n));
  row("Lambda", num(h.Lambda));
  row("kappa * lambda_chi", num(h.kappa * h.lambda_chi));
  row("effective bound", num(eff));
  row("delta_effective", num(delta));
  row("positive bound", eff > 0.0 ? "yes (pi_1 finite, cited)" : "no");
  row("generator bound N", num(N));
  row("Betti bound B (m = 2)", std::to_string(B.value) + " at r = " + std::to_string(B.argmin_r));
  row("Betti ceiling", std::to_string(ceiling) + (h.gradient_case ? " (gradient case)" : ""));
  row("thresholds", "non-constructive");
  return {j, os.str()};
}

}  // namespace belab
