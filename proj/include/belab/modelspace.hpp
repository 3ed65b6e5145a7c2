#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "belab/errors.hpp"
#include "belab/numerics.hpp"

namespace belab {

// Constant-curvature comparison space of real dimension d with profile l_lambda
// and optional weight exp(weight_rate * rho).
struct ModelSpace {
  double d = 2.0;
  double lambda = 0.0;
  double weight_rate = 0.0;

  ModelSpace() = default;
  ModelSpace(double d_, double lambda_, double weight_rate_ = 0.0)
      : d(d_), lambda(lambda_), weight_rate(weight_rate_) {
    if (!(d > 1.0)) throw DomainError("ModelSpace: d must exceed 1");
    if (!(weight_rate >= 0.0)) throw DomainError("ModelSpace: weight_rate must be >= 0");
  }
};

namespace detail {

inline void require_nonpositive(const ModelSpace& model, const char* what) {
  if (model.lambda > 0.0)
    throw DomainError(std::string(what) + ": requires lambda <= 0");
}

}  // namespace detail

inline double ell(const ModelSpace& model, double rho) {
  if (!(rho >= 0.0)) throw DomainError("ell: rho must be >= 0");
  const double lam = model.lambda;
  if (lam == 0.0) return rho;
  const double k = std::sqrt(std::abs(lam));
  if (lam > 0.0) {
    if (rho >= num::pi / k) throw DomainError("ell: rho beyond pi/sqrt(lambda)");
    return std::sin(k * rho) / k;
  }
  return std::sinh(k * rho) / k;
}

inline double ell_prime(const ModelSpace& model, double rho) {
  if (!(rho >= 0.0)) throw DomainError("ell_prime: rho must be >= 0");
  const double lam = model.lambda;
  if (lam == 0.0) return 1.0;
  const double k = std::sqrt(std::abs(lam));
  if (lam > 0.0) {
    if (rho >= num::pi / k) throw DomainError("ell_prime: rho beyond pi/sqrt(lambda)");
    return std::cos(k * rho);
  }
  return std::cosh(k * rho);
}

// log(l_lambda(rho)) for lambda <= 0, stable for large rho.
inline double log_ell(const ModelSpace& model, double rho) {
  detail::require_nonpositive(model, "log_ell");
  if (rho <= 0.0) return -std::numeric_limits<double>::infinity();
  if (model.lambda == 0.0) return std::log(rho);
  const double k = std::sqrt(-model.lambda);
  const double x = k * rho;
  if (x < 20.0) return std::log(std::sinh(x) / k);
  return x + std::log1p(-std::exp(-2.0 * x)) - std::log(2.0 * k);
}

inline double model_mean_curvature(const ModelSpace& model, double rho) {
  if (!(rho > 0.0)) throw DomainError("model_mean_curvature: rho must be > 0");
  const double lam = model.lambda;
  if (lam == 0.0) return (model.d - 1.0) / rho;
  const double k = std::sqrt(std::abs(lam));
  if (lam > 0.0) {
    if (rho >= num::pi / k) throw DomainError("model_mean_curvature: rho beyond pi/sqrt(lambda)");
    return (model.d - 1.0) * k / std::tan(k * rho);
  }
  return (model.d - 1.0) * k / std::tanh(k * rho);
}

inline double sphere_area(double d) {
  return 2.0 * std::pow(num::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

// Samples of G_r with l^{1-d} (l^{d-1} G')' = 1, G(r) = G'(r) = 0.
struct GreenBarrier {
  ModelSpace model;
  double r = 1.0;
  std::vector<double> rho;  // decreasing from r to rho_min
  std::vector<double> G;
  std::vector<double> dG;

  double rho_min() const { return rho.back(); }

  double second_derivative(double x, double dg) const {
    return 1.0 - model_mean_curvature(model, x) * dg;
  }

  double value(double x) const { return eval(x, false); }
  double derivative(double x) const { return eval(x, true); }

 private:
  double eval(double x, bool want_derivative) const {
    if (!(x > 0.0) || x > r * (1.0 + 1e-12))
      throw DomainError("GreenBarrier: rho outside (0, r]");
    x = std::min(x, r);
    if (x < rho_min()) {
      // blow-up asymptotic matched to the last integrated point
      const double x0 = rho_min(), g0 = G.back(), d0 = dG.back();
      const double p = 2.0 - model.d;
      if (want_derivative) return d0 * std::pow(x / x0, 1.0 - model.d);
      if (std::abs(p) < 1e-12) return g0 + d0 * x0 * std::log(x / x0);
      return g0 + d0 * x0 / p * (std::pow(x / x0, p) - 1.0);
    }
    // rho is decreasing: find k with rho[k] >= x >= rho[k+1]
    std::size_t lo = 0, hi = rho.size() - 1;
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      if (rho[mid] >= x) lo = mid; else hi = mid;
    }
    const double xa = rho[hi], xb = rho[lo];
    const double sa = second_derivative(xa, dG[hi]);
    const double sb = second_derivative(xb, dG[lo]);
    if (!want_derivative)
      return num::hermite5(xa, xb, G[hi], dG[hi], sa, G[lo], dG[lo], sb, x);
    // derivative: interpolate G' with cubic Hermite using G''
    const double h = xb - xa, t = (x - xa) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * dG[hi] + (t3 - 2 * t2 + t) * h * sa +
           (-2 * t3 + 3 * t2) * dG[lo] + (t3 - t2) * h * sb;
  }
};

inline GreenBarrier green_barrier(const ModelSpace& model, double r,
                                  double ratio = 1.005, double tol = 1e-13) {
  detail::require_nonpositive(model, "green_barrier");
  if (!(r > 0.0)) throw DomainError("green_barrier: r must be > 0");
  namespace ode = boost::numeric::odeint;
  using State = std::array<double, 2>;  // (G, P = l^{d-1} G')

  GreenBarrier gb;
  gb.model = model;
  gb.r = r;
  const double stop = 1e-4 * r;
  for (double x = r; x > stop; x /= ratio) gb.rho.push_back(x);
  gb.rho.push_back(stop);

  auto rhs = [&](const State& s, State& ds, double x) {
    const double w = std::exp((model.d - 1.0) * log_ell(model, x));
    ds[0] = s[1] / w;
    ds[1] = w;
  };
  State s{0.0, 0.0};
  auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<State>());
  gb.G.reserve(gb.rho.size());
  gb.dG.reserve(gb.rho.size());
  try {
    ode::integrate_times(
        stepper, rhs, s, gb.rho.begin(), gb.rho.end(), -1e-3 * r,
        [&](const State& st, double x) {
          const double w = std::exp((model.d - 1.0) * log_ell(model, x));
          gb.G.push_back(st[0]);
          gb.dG.push_back(x == r ? 0.0 : st[1] / w);
        },
        ode::max_step_checker(1000000));
  } catch (const std::exception& e) {
    throw SolverFailure(std::string("green_barrier: integration failure near rho=0: ") + e.what());
  }
  if (gb.G.size() != gb.rho.size())
    throw SolverFailure("green_barrier: integration did not reach rho_min");
  for (double v : gb.G)
    if (!std::isfinite(v)) throw SolverFailure("green_barrier: non-finite sample");
  return gb;
}

inline double model_ball_volume(const ModelSpace& model, double r, bool weighted) {
  detail::require_nonpositive(model, "model_ball_volume");
  if (!(r >= 0.0)) throw DomainError("model_ball_volume: r must be >= 0");
  if (r == 0.0) return 0.0;
  const double area = sphere_area(model.d);
  const bool use_weight = weighted && model.weight_rate != 0.0;
  if (model.lambda == 0.0 && !use_weight) return area * std::pow(r, model.d) / model.d;
  auto integrand = [&](double x) {
    if (x <= 0.0) return 0.0;
    double lg = (model.d - 1.0) * log_ell(model, x);
    if (use_weight) lg += model.weight_rate * x;
    return std::exp(lg);
  };
  return area * num::integrate(integrand, 0.0, r);
}

// hbar(t) = 3 (sinh^2 t - t^2) / (t^2 sinh^2 t), hbar(0) = 1.
inline double growth_hbar(double t) {
  t = std::abs(t);
  if (t < 1e-2) {
    const double t2 = t * t;
    return 1.0 - t2 / 5.0 + 2.0 * t2 * t2 / 63.0;
  }
  const double s = std::sinh(t);
  return 3.0 * (s * s - t * t) / (t * t * s * s);
}

// integral of hbar over [0, x], i.e. 3 (coth x - 1/x).
inline double growth_hbar_integral(double x) {
  if (x < 1e-2) {
    const double x2 = x * x;
    return 3.0 * x * (1.0 / 3.0 - x2 / 45.0 + 2.0 * x2 * x2 / 945.0);
  }
  return 3.0 * (1.0 / std::tanh(x) - 1.0 / x);
}

inline double growth_function_h(double m, double C, double x) {
  if (!(m > 0.0)) throw DomainError("growth_function_h: m must be > 0");
  if (!(C >= 0.0)) throw DomainError("growth_function_h: C must be >= 0");
  if (!(x >= 0.0)) throw DomainError("growth_function_h: x must be >= 0");
  const double k = std::max(C / 3.0, C * C / (9.0 * m));
  return k * growth_hbar_integral(x);
}

// Parameters of the growth-weighted comparison integrals.
struct GrowthModel {
  int n = 2;
  double m = 1.0;
  double delta = 0.0;
  double C = 0.0;  // enters h only

  double log_integrand(double rho) const {
    const ModelSpace base(std::max(2.0, static_cast<double>(n)), -delta);
    const double sd = std::sqrt(delta);
    double v = m * std::log1p(rho);
    if (delta > 0.0) v += sd * (rho * rho + rho * rho * rho) * growth_function_h(m, C, sd * rho);
    if (n > 1) v += (n - 1) * log_ell(base, rho);
    return v;
  }

  double log_integral(double r) const {
    return num::log_integral_increasing([this](double x) { return log_integrand(x); }, 0.0, r);
  }
};

inline double log_bishop_gromov_ratio_bound(int n, double m, double delta, double C,
                                            double C0, double r1, double r2) {
  if (!(r1 > 0.0 && r2 > r1)) throw DomainError("bishop_gromov_ratio_bound: need 0 < r1 < r2");
  if (!(delta >= 0.0)) throw DomainError("bishop_gromov_ratio_bound: delta must be >= 0");
  if (n < 1) throw DomainError("bishop_gromov_ratio_bound: n must be >= 1");
  const GrowthModel g{n, m, delta, C};
  return C0 + g.log_integral(r2) - g.log_integral(r1);
}

// C enters only through h; C0 is the additive constant in the numerator exponent.
inline double bishop_gromov_ratio_bound(int n, double m, double delta, double C, double C0,
                                        double r1, double r2) {
  return std::exp(log_bishop_gromov_ratio_bound(n, m, delta, C, C0, r1, r2));
}

}  // namespace belab
