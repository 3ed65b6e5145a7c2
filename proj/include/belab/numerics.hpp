#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "belab/errors.hpp"

namespace belab::num {

inline constexpr double pi = std::numbers::pi;

// Adaptive Gauss-Kronrod on [a, b].
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-13,
                 unsigned max_depth = 15) {
  if (a == b) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, a, b, max_depth, rel_tol, &err);
}

// log of the integral of exp(L) over [a, b] for nondecreasing L.
// Only the part within `window` of the maximum contributes; that part is split
// into panels over which L changes by at most `panel_drop`.
template <class F>
double log_integral_increasing(F&& L, double a, double b, double window = 60.0,
                               double panel_drop = 0.5) {
  if (!(b > a)) return -std::numeric_limits<double>::infinity();
  const double top = L(b);
  double lo = a;
  if (!(L(a) > top - window)) {
    double l = a, h = b;
    for (int it = 0; it < 200 && h - l > 1e-15 * (1.0 + std::abs(b)); ++it) {
      double mid = 0.5 * (l + h);
      if (L(mid) > top - window) h = mid; else l = mid;
    }
    lo = l;
  }
  const double min_panels = 32.0;
  double sum = 0.0;
  double x = lo;
  const double max_w = (b - lo) / min_panels;
  while (x < b) {
    double w = std::min(max_w, b - x);
    // shrink panel until L varies by at most panel_drop across it
    while (w > 1e-14 * (1.0 + std::abs(b)) && L(x + w) - L(x) > panel_drop) w *= 0.5;
    double xe = (b - (x + w) < 1e-12 * w) ? b : x + w;
    sum += boost::math::quadrature::gauss<double, 10>::integrate(
        [&](double t) { return std::exp(L(t) - top); }, x, xe);
    x = xe;
  }
  return top + std::log(sum);
}

// C2 smooth step: 1 on (-inf, a], 0 on [b, inf), quintic in between.
struct SmoothStep {
  double a = 0.0;
  double b = 1.0;

  double value(double x) const {
    if (x <= a) return 1.0;
    if (x >= b) return 0.0;
    double t = (x - a) / (b - a);
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
  }
  double d1(double x) const {
    if (x <= a || x >= b) return 0.0;
    double t = (x - a) / (b - a);
    return -30.0 * t * t * (1.0 - t) * (1.0 - t) / (b - a);
  }
  double d2(double x) const {
    if (x <= a || x >= b) return 0.0;
    double t = (x - a) / (b - a);
    return -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / ((b - a) * (b - a));
  }
  double max_abs_d1() const { return 1.875 / (b - a); }
};

// Quintic Hermite interpolation from value, first and second derivative.
inline double hermite5(double x0, double x1, double f0, double d0, double s0,
                       double f1, double d1, double s1, double x) {
  const double h = x1 - x0;
  const double t = (x - x0) / h;
  const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  const double h00 = 1 - 10 * t3 + 15 * t4 - 6 * t5;
  const double h10 = t - 6 * t3 + 8 * t4 - 3 * t5;
  const double h20 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5);
  const double h01 = 10 * t3 - 15 * t4 + 6 * t5;
  const double h11 = -4 * t3 + 7 * t4 - 3 * t5;
  const double h21 = 0.5 * (t3 - 2 * t4 + t5);
  return h00 * f0 + h10 * h * d0 + h20 * h * h * s0 + h01 * f1 + h11 * h * d1 +
         h21 * h * h * s1;
}

}  // namespace belab::num
