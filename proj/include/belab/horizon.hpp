#pragma once

#include <algorithm>
#include <functional>
#include <limits>

#include "belab/catalog.hpp"
#include "belab/geometry.hpp"

namespace belab {

// Cross-section data (g, h, kappa, chi, Lambda); h and chi are given in chart 0.
template <int N>
struct NearHorizonData {
  int n = N;
  double Lambda = 0.0;
  double kappa = 0.0;
  ChartManifold<N> base;
  CovectorField<N> h;
  std::function<Mat<N>(const Vec<N>&)> chi;
};

template <int N>
struct HorizonBakryEmery {
  ChartManifold<N> manifold;  // X = -h
  double m = 2.0;
  double kappa_lambda = 0.0;    // inf over the grid of kappa * chi(w, w), |w| = 1
  double effective_bound = 0.0;  // Ric_X^2 >= effective_bound * g
};

namespace detail {

template <int N>
Mat<N> chi_at(const NearHorizonData<N>& H, const ChartManifold<N>& M, const Point<N>& p) {
  if (!H.chi) return Mat<N>::Zero();
  if (p.chart == 0) return H.chi(p.x);
  const Point<N> q = M.to_chart(p, 0);
  const Mat<N> J = M.transitions[1].jacobian(p.x);
  return J.transpose() * H.chi(q.x) * J;
}

}  // namespace detail

template <int N>
HorizonBakryEmery<N> horizon_to_bakry_emery(const NearHorizonData<N>& H, int per_axis = 16) {
  HorizonBakryEmery<N> out;
  out.manifold = H.base;
  if (H.h.value) {
    CovectorField<N> X;
    auto hv = H.h.value;
    X.value = [hv](const Vec<N>& x) -> Vec<N> { return -hv(x); };
    if (H.h.jacobian) {
      auto hj = H.h.jacobian;
      X.jacobian = [hj](const Vec<N>& x) -> Mat<N> { return -hj(x); };
    }
    apply_field(out.manifold, X);
  } else {
    for (auto& c : out.manifold.charts) {
      c.X = {};
      c.X_jacobian = {};
    }
  }
  double kl = std::numeric_limits<double>::infinity();
  if (H.kappa == 0.0) {
    kl = 0.0;
  } else {
    for (const auto& p : sample_grid(out.manifold, per_axis)) {
      const Mat<N> K = H.kappa * detail::chi_at(H, out.manifold, p);
      kl = std::min(kl, detail::min_generalized_eigenvalue<N>(K, out.manifold.metric(p)));
    }
  }
  out.kappa_lambda = kl;
  out.effective_bound = 2.0 * H.Lambda / H.n + 2.0 * kl;
  return out;
}

// Largest g-relative eigenvalue (in modulus) of Ric_X^2 - (2 Lambda / n) g - 2 kappa chi.
template <int N>
double horizon_identity_residual(const NearHorizonData<N>& H, const HorizonBakryEmery<N>& B,
                                 int per_axis = 12) {
  double worst = 0.0;
  for (const auto& p : sample_grid(B.manifold, per_axis)) {
    const Mat<N> g = B.manifold.metric(p);
    const Mat<N> R = bakry_emery_tensor(B.manifold, 2.0, p) - (2.0 * H.Lambda / H.n) * g -
                     2.0 * H.kappa * detail::chi_at(H, B.manifold, p);
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat<N>> es(0.5 * (R + R.transpose()), g);
    worst = std::max(worst, es.eigenvalues().cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace belab
