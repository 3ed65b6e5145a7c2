#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "belab/errors.hpp"
#include "belab/geodesics.hpp"
#include "belab/geometry.hpp"
#include "belab/mesh.hpp"
#include "belab/modelspace.hpp"
#include "belab/numerics.hpp"
#include "belab/report.hpp"

namespace belab {

namespace detail {

// Coefficients of Delta_X u = a^{ij} d_ij u + b^j d_j u at a point.
template <int N>
struct NodeGeometry {
  Mat<N> ginv;
  Vec<N> b;
  Christoffel<N> C;
  Vec<N> X;
  double sqrtg = 1.0;
};

template <int N>
NodeGeometry<N> node_geometry(const ChartManifold<N>& M, const Point<N>& p) {
  NodeGeometry<N> G;
  const auto J = M.jet(p, 1);
  G.ginv = checked_inverse<N>(J.g);
  G.sqrtg = std::sqrt(J.g.determinant());
  G.C = christoffel_from_jet<N>(J, G.ginv);
  G.X = M.X(p);
  // b^j = -g^{ik} Gamma^j_ik - g^{jk} X_k
  G.b = -G.ginv * G.X;
  for (int j = 0; j < N; ++j) G.b[j] -= G.ginv.cwiseProduct(G.C.G[j]).sum();
  return G;
}

template <int N>
using Stencil = std::array<double, mesh::stencil_size<N>()>;

template <int N>
Stencil<N> stencil_weights(const NodeGeometry<N>& G, const Vec<N>& h) {
  Stencil<N> w{};
  const int centre = mesh::stencil_size<N>() / 2;
  for (int i = 0; i < N; ++i) {
    typename Grid<N>::Index p{}, m{};
    p[i] = 1;
    m[i] = -1;
    const double a = G.ginv(i, i) / (h[i] * h[i]);
    w[static_cast<std::size_t>(centre)] -= 2.0 * a;
    w[static_cast<std::size_t>(mesh::offset_slot<N>(p))] += a + G.b[i] / (2.0 * h[i]);
    w[static_cast<std::size_t>(mesh::offset_slot<N>(m))] += a - G.b[i] / (2.0 * h[i]);
    for (int j = i + 1; j < N; ++j)
      for (int si : {-1, 1})
        for (int sj : {-1, 1}) {
          typename Grid<N>::Index d{};
          d[i] = si;
          d[j] = sj;
          w[static_cast<std::size_t>(mesh::offset_slot<N>(d))] += 2.0 * G.ginv(i, j) * si * sj / (4.0 * h[i] * h[j]);
        }
  }
  return w;
}

template <int N>
double apply(const Stencil<N>& w, const Stencil<N>& v) {
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * v[k];
  return s;
}

// d_ij u - Gamma^k_ij d_k u
template <int N>
Mat<N> covariant_hessian_from(const Stencil<N>& v, const Vec<N>& h, const Christoffel<N>& C) {
  const Vec<N> du = mesh::gradient_from<N>(v, h);
  Mat<N> H = mesh::second_from<N>(v, h);
  for (int k = 0; k < N; ++k) H -= C.G[k] * du[k];
  return H;
}

inline double norm_inf(const Eigen::SparseMatrix<double>& A) {
  Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(A.rows());
  for (Eigen::Index k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) rowsum[it.row()] += std::abs(it.value());
  return rowsum.maxCoeff();
}

}  // namespace detail

// Stencil of Delta_X at node i, ordered as mesh::offsets.
template <int N>
detail::Stencil<N> drift_stencil(const ChartManifold<N>& M, const Grid<N>& grid, std::size_t i) {
  return detail::stencil_weights<N>(detail::node_geometry(M, grid.point(i)), grid.spacing);
}

template <int N>
double drift_laplacian(const ChartManifold<N>& M, const MeshField<N>& u, std::size_t i) {
  return detail::apply<N>(drift_stencil(M, u.grid, i), mesh::gather(u, i));
}

// Covariant Hessian (lower indices) at node i.
template <int N>
Mat<N> covariant_hessian(const ChartManifold<N>& M, const MeshField<N>& u, std::size_t i) {
  return detail::covariant_hessian_from<N>(mesh::gather(u, i), u.grid.spacing, christoffel(M, u.grid.point(i)));
}

// |du|_g^2 at node i.
template <int N>
double gradient_norm2(const ChartManifold<N>& M, const MeshField<N>& u, std::size_t i) {
  const Vec<N> du = mesh::gradient(u, i);
  return du.dot(M.metric(u.grid.point(i)).ldlt().solve(du));
}

// Delta_X |grad u|^2 - 2|Hess u|^2 - 2<grad u, grad Delta_X u> - 2 Ric_X^m(grad u, grad u) - (2/m) X(u)^2.
template <int N>
double bochner_residual(const ChartManifold<N>& M, double m, const MeshField<N>& u, std::size_t i) {
  if (!(m > 0.0)) throw DomainError("bochner_residual: m must be > 0");
  if (!mesh::has_stencil(u, i, 2)) throw DomainError("bochner_residual: node must be two nodes from the boundary");
  const auto& off = mesh::offsets<N>();
  const Vec<N>& h = u.grid.spacing;
  detail::Stencil<N> w2{}, lap{};
  for (std::size_t s = 0; s < off.size(); ++s) {
    const auto j = static_cast<std::size_t>(u.grid.offset(i, off[s]));
    const auto G = detail::node_geometry(M, u.grid.point(j));
    const auto v = mesh::gather(u, j);
    const Vec<N> du = mesh::gradient_from<N>(v, h);
    w2[s] = du.dot(G.ginv * du);
    lap[s] = detail::apply<N>(detail::stencil_weights<N>(G, h), v);
  }
  const Point<N> p = u.grid.point(i);
  const auto G = detail::node_geometry(M, p);
  const auto v = mesh::gather(u, i);
  const Vec<N> du = mesh::gradient_from<N>(v, h);
  const Vec<N> grad = G.ginv * du;
  const Mat<N> H = detail::covariant_hessian_from<N>(v, h, G.C);
  const double hess2 = (G.ginv * H * G.ginv * H).trace();
  const double cross = grad.dot(mesh::gradient_from<N>(lap, h));
  const double ric = grad.dot(bakry_emery_tensor(M, m, p) * grad);
  const double Xu = G.X.dot(grad);
  return detail::apply<N>(detail::stencil_weights<N>(G, h), w2) - 2.0 * hess2 - 2.0 * cross - 2.0 * ric -
         2.0 / m * Xu * Xu;
}

// ---------------------------------------------------------------------------
// Dirichlet problems

template <int N>
struct DirichletSolution {
  MeshField<N> u;
  double residual = 0.0;  // ||A x - b|| / (||A|| ||x|| + ||b||), infinity norms
  int refinements = 0;
  std::size_t unknowns = 0;
};

// Solves Delta_X u = source on Interior nodes with u fixed on Boundary nodes.
// `source` is empty (zero) or has one entry per grid node.
template <int N>
DirichletSolution<N> solve_drift_dirichlet(const ChartManifold<N>& M, const MeshField<N>& data,
                                           const Eigen::VectorXd& source = {}, double tol = 1e-10) {
  data.validate();
  const auto& grid = data.grid;
  const std::size_t n = grid.size();
  if (source.size() != 0 && static_cast<std::size_t>(source.size()) != n)
    throw DomainError("solve_drift_dirichlet: source size mismatch");
  std::vector<long> unknown(n, -1);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (data.kind[i] == NodeKind::Interior) unknown[i] = static_cast<long>(count++);
  if (count == 0) throw DomainError("solve_drift_dirichlet: no interior nodes");

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(count * static_cast<std::size_t>(mesh::stencil_size<N>()));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count));
  std::array<long, mesh::stencil_size<N>()> nb;
  for (std::size_t i = 0; i < n; ++i) {
    if (unknown[i] < 0) continue;
    if (!mesh::neighbourhood(data, i, nb)) throw DomainError("solve_drift_dirichlet: interior node without full stencil");
    const auto w = drift_stencil(M, grid, i);
    const auto row = static_cast<Eigen::Index>(unknown[i]);
    double r = source.size() ? source[static_cast<Eigen::Index>(i)] : 0.0;
    for (std::size_t s = 0; s < nb.size(); ++s) {
      const auto j = static_cast<std::size_t>(nb[s]);
      if (unknown[j] >= 0)
        trip.emplace_back(row, static_cast<Eigen::Index>(unknown[j]), w[s]);
      else
        r -= w[s] * data[j];
    }
    rhs[row] = r;
  }
  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(count));
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw SolverFailure("solve_drift_dirichlet: LU factorization failed: " + lu.lastErrorMessage());
  Eigen::VectorXd x = lu.solve(rhs);
  const double normA = detail::norm_inf(A);
  auto relres = [&](const Eigen::VectorXd& y) {
    const double den = normA * y.template lpNorm<Eigen::Infinity>() + rhs.template lpNorm<Eigen::Infinity>();
    const double num = (A * y - rhs).template lpNorm<Eigen::Infinity>();
    return den > 0.0 ? num / den : num;
  };
  DirichletSolution<N> out;
  out.residual = relres(x);
  while (out.residual > tol && out.refinements < 3) {
    x += lu.solve(Eigen::VectorXd(rhs - A * x));
    ++out.refinements;
    out.residual = relres(x);
  }
  if (!(out.residual <= tol))
    throw SolverFailure("solve_drift_dirichlet: relative residual " + std::to_string(out.residual) + " after " +
                        std::to_string(out.refinements) + " refinement steps (" + std::to_string(count) + " unknowns)");
  out.u = data;
  for (std::size_t i = 0; i < n; ++i)
    if (unknown[i] >= 0) out.u[i] = x[static_cast<Eigen::Index>(unknown[i])];
  out.unknowns = count;
  return out;
}

// ---------------------------------------------------------------------------
// Distance balls on a chart patch

template <int N>
struct BallMesh {
  MeshField<N> field;             // kinds set; values zero
  std::vector<double> distance;   // to the centre, NaN where not needed
  Point<N> center;
  double radius = 0.0;
  std::vector<std::size_t> interior, boundary;

  const Grid<N>& grid() const { return field.grid; }
};

// Interior: d < r. Boundary: the band of nodes outside with an interior 3^N neighbour.
template <int N>
BallMesh<N> ball_mesh(const DistanceSolver<N>& S, const Point<N>& p0, double r, double h) {
  if (!(r > 0.0) || !(h > 0.0) || h >= r) throw DomainError("ball_mesh: need 0 < h < r");
  const auto& M = S.manifold();
  const Point<N> p = M.canonical(p0);
  const auto& ch = M.chart(p.chart);
  const Mat<N> g = M.metric(p);
  typename Grid<N>::Index half{};
  for (int k = 0; k < N; ++k) half[k] = static_cast<int>(std::ceil(1.15 * r / (h * std::sqrt(g(k, k))))) + 2;

  for (int attempt = 0; attempt < 5; ++attempt) {
    const Grid<N> G = Grid<N>::patch(p.chart, p.x, h, half);
    for (int k = 0; k < N; ++k) {
      const double lo = G.origin[k], hi = G.origin[k] + (G.count[k] - 1) * h;
      if (ch.periodic[k]) {
        if (hi - lo >= ch.hi[k] - ch.lo[k]) throw DomainError("ball_mesh: ball wraps around a periodic axis");
      } else if (lo < ch.lo[k] || hi > ch.hi[k]) {
        throw DomainError("ball_mesh: ball exceeds chart coverage");
      }
    }
    BallMesh<N> B;
    B.field = MeshField<N>(G);
    B.center = p;
    B.radius = r;
    const std::size_t n = G.size();
    B.distance.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n; ++i) B.distance[i] = S.distance(G.point(i), p);
    bool touches = false;
    const auto& off = mesh::offsets<N>();
    for (std::size_t i = 0; i < n; ++i) {
      if (B.distance[i] < r) {
        B.field.kind[i] = NodeKind::Interior;
        const auto m = G.multi(i);
        for (int k = 0; k < N; ++k)
          if (m[k] == 0 || m[k] == G.count[k] - 1) touches = true;
        continue;
      }
      bool near = false;
      for (const auto& d : off) {
        const long j = G.offset(i, d);
        if (j >= 0 && B.distance[static_cast<std::size_t>(j)] < r) near = true;
      }
      B.field.kind[i] = near ? NodeKind::Boundary : NodeKind::Inactive;
    }
    if (touches) {
      for (int k = 0; k < N; ++k) half[k] = static_cast<int>(std::ceil(1.3 * half[k]));
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (B.field.kind[i] == NodeKind::Interior) B.interior.push_back(i);
      if (B.field.kind[i] == NodeKind::Boundary) B.boundary.push_back(i);
    }
    return B;
  }
  throw DomainError("ball_mesh: ball does not fit in an enlarged chart patch");
}

// ---------------------------------------------------------------------------
// X-harmonic replacement of the Busemann stand-ins

template <int N>
struct Replacement {
  MeshField<N> h;
  MeshField<N> b;  // b on Boundary nodes, and on Interior nodes when requested
  double residual = 0.0;
  double boundary_min = 0.0;
  double boundary_max = 0.0;
  double max_principle_gap = 0.0;  // > 0 when h leaves [min b, max b] on the boundary
  bool interior_b = false;
};

template <int N>
Replacement<N> x_harmonic_replacement(const DistanceSolver<N>& S, const TriangleConfig<N>& T, int sign,
                                      const BallMesh<N>& ball, bool interior_b = true) {
  if (sign != 1 && sign != -1) throw DomainError("x_harmonic_replacement: sign must be +1 or -1");
  Replacement<N> R;
  R.interior_b = interior_b;
  MeshField<N> data = ball.field;
  MeshField<N> b = ball.field;
  R.boundary_min = std::numeric_limits<double>::infinity();
  R.boundary_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i : ball.boundary) {
    const double v = busemann_standin(S, T, sign, ball.grid().point(i));
    data[i] = b[i] = v;
    R.boundary_min = std::min(R.boundary_min, v);
    R.boundary_max = std::max(R.boundary_max, v);
  }
  if (interior_b)
    for (std::size_t i : ball.interior) b[i] = busemann_standin(S, T, sign, ball.grid().point(i));
  auto sol = solve_drift_dirichlet(S.manifold(), data);
  R.h = std::move(sol.u);
  R.b = std::move(b);
  R.residual = sol.residual;
  double gap = -std::numeric_limits<double>::infinity();
  for (std::size_t i : ball.interior) gap = std::max({gap, R.h[i] - R.boundary_max, R.boundary_min - R.h[i]});
  R.max_principle_gap = gap;
  return R;
}

// The three averaged quantities controlling h: sup|h - b|, mean |grad(h - b)|^2, mean |Hess h|^2.
struct HessianQuantities {
  double sup_diff = 0.0;
  double grad_diff = 0.0;
  double hess = 0.0;
  double residual = 0.0;
  std::size_t interior_nodes = 0;

  json to_json() const {
    return json{{"sup_h_minus_b", sup_diff}, {"mean_grad_diff_sq", grad_diff}, {"mean_hess_sq", hess},
                {"solver_residual", residual}, {"interior_nodes", interior_nodes}};
  }
};

template <int N>
HessianQuantities hessian_quantities(const ChartManifold<N>& M, const BallMesh<N>& ball, const Replacement<N>& R) {
  if (!R.interior_b) throw DomainError("hessian_quantities: replacement lacks interior b values");
  HessianQuantities Q;
  MeshField<N> diff = R.h;
  diff.values = R.h.values - R.b.values;
  double wsum = 0.0, gsum = 0.0, hsum = 0.0;
  for (std::size_t i : ball.interior) {
    Q.sup_diff = std::max(Q.sup_diff, std::abs(diff[i]));
    const auto G = detail::node_geometry(M, ball.grid().point(i));
    const Vec<N> dd = mesh::gradient(diff, i);
    const Mat<N> H = detail::covariant_hessian_from<N>(mesh::gather(R.h, i), ball.grid().spacing, G.C);
    gsum += G.sqrtg * dd.dot(G.ginv * dd);
    hsum += G.sqrtg * (G.ginv * H * G.ginv * H).trace();
    wsum += G.sqrtg;
  }
  Q.grad_diff = gsum / wsum;
  Q.hess = hsum / wsum;
  Q.residual = R.residual;
  Q.interior_nodes = ball.interior.size();
  return Q;
}

// Worst of the two signs; the two replacements are solved concurrently.
template <int N>
HessianQuantities hessian_estimates(const DistanceSolver<N>& S, const TriangleConfig<N>& T, double r, double h) {
  const auto ball = ball_mesh(S, T.p, r, h);
  auto job = [&](int sign) { return hessian_quantities(S.manifold(), ball, x_harmonic_replacement(S, T, sign, ball)); };
  auto minus = std::async(std::launch::async, job, -1);
  const auto qp = job(1);
  const auto qm = minus.get();
  HessianQuantities Q;
  Q.sup_diff = std::max(qp.sup_diff, qm.sup_diff);
  Q.grad_diff = std::max(qp.grad_diff, qm.grad_diff);
  Q.hess = std::max(qp.hess, qm.hess);
  Q.residual = std::max(qp.residual, qm.residual);
  Q.interior_nodes = qp.interior_nodes;
  return Q;
}

// ---------------------------------------------------------------------------
// Principal eigenfunction of L u = Delta u + div(u X) on a periodic grid

template <int N>
Eigen::SparseMatrix<double> drift_matrix(const ChartManifold<N>& M, const Grid<N>& grid) {
  const std::size_t n = grid.size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(n * static_cast<std::size_t>(mesh::stencil_size<N>()));
  const auto& off = mesh::offsets<N>();
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = drift_stencil(M, grid, i);
    for (std::size_t s = 0; s < off.size(); ++s) {
      const long j = grid.offset(i, off[s]);
      if (j < 0) throw DomainError("drift_matrix: grid must be periodic on every axis");
      trip.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), w[s]);
    }
  }
  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  return A;
}

template <int N>
struct Eigenfunction {
  MeshField<N> u0;               // positive, u0(base) = 1
  MeshField<N> f;                // -log u0
  Eigen::SparseMatrix<double> A; // discrete Delta_X
  Eigen::VectorXd weight;        // sqrt(g) * cell volume
  double residual = 0.0;         // ||L u0|| / ||u0||, infinity norms
  std::size_t base = 0;

  // L_h v = W^{-1} A^T W v, the weighted adjoint of A.
  Eigen::VectorXd apply_L(const Eigen::VectorXd& v) const {
    return Eigen::VectorXd(A.transpose() * weight.cwiseProduct(v)).cwiseQuotient(weight);
  }
};

template <int N>
Eigenfunction<N> principal_eigenfunction(const ChartManifold<N>& M, int per_axis, std::size_t base = 0,
                                         double tol = 1e-8) {
  if (M.chart_count() != 1) throw DomainError("principal_eigenfunction: needs a single periodic chart");
  const auto grid = Grid<N>::periodic_chart(M, per_axis);
  const std::size_t n = grid.size();
  if (base >= n) throw DomainError("principal_eigenfunction: base node out of range");
  Eigenfunction<N> E;
  E.base = base;
  E.A = drift_matrix(M, grid);
  E.weight.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    E.weight[static_cast<Eigen::Index>(i)] = std::sqrt(M.metric(grid.point(i)).determinant()) * grid.cell_volume();

  // rows of A^T sum to zero, so the base row is redundant and becomes the normalisation
  Eigen::SparseMatrix<double> B = E.A.transpose();
  const auto bi = static_cast<Eigen::Index>(base);
  B.prune([bi](Eigen::Index row, Eigen::Index, double) { return row != bi; });
  B.coeffRef(bi, bi) = 1.0;
  B.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(B);
  if (lu.info() != Eigen::Success)
    throw SolverFailure("principal_eigenfunction: kernel is not one-dimensional (singular bordered system)");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  rhs[bi] = 1.0;
  const Eigen::VectorXd y = lu.solve(rhs);
  // a second near-null direction shows up as a huge response to a generic right-hand side
  Eigen::VectorXd probe = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n), -1.0, 1.0).array().sin();
  probe[bi] = 0.0;
  const Eigen::VectorXd z = lu.solve(probe);
  const double scale = detail::norm_inf(E.A);
  if (!y.allFinite() || !z.allFinite() || z.template lpNorm<Eigen::Infinity>() * scale > 1e12)
    throw SolverFailure("principal_eigenfunction: near-null space is not one-dimensional");

  Eigen::VectorXd u = y.cwiseQuotient(E.weight);
  u /= u[bi];
  if (u.minCoeff() <= 0.0)
    throw SolverFailure("principal_eigenfunction: kernel vector is not positive (min " + std::to_string(u.minCoeff()) + ")");
  E.residual = E.apply_L(u).template lpNorm<Eigen::Infinity>() / u.template lpNorm<Eigen::Infinity>();
  if (!(E.residual <= tol))
    throw SolverFailure("principal_eigenfunction: residual " + std::to_string(E.residual) + " exceeds tolerance");
  E.u0 = MeshField<N>(grid);
  E.u0.values = u;
  E.f = MeshField<N>(grid);
  E.f.values = -u.array().log();
  return E;
}

// ---------------------------------------------------------------------------
// Cheng-Yau gradient estimate

// F in Delta_X u = a F(u), with its derivative.
struct ScalarFunction {
  std::string name;
  std::function<double(double)> F;
  std::function<double(double)> dF;

  static ScalarFunction identity() { return {"u", [](double u) { return u; }, [](double) { return 1.0; }}; }
  static ScalarFunction power(double q) {
    return {"u^" + std::to_string(q), [q](double u) { return std::pow(u, q); },
            [q](double u) { return q * std::pow(u, q - 1.0); }};
  }
};

// Radial cut-off constant: psi = q^2 with q a quintic step from r1 to r1 + 0.9 (r2 - r1).
inline double cheng_yau_C0(int n, double m, double delta, double r1, double r2, int samples = 4000) {
  if (!(0.0 < r1 && r1 < r2)) throw DomainError("cheng_yau_C0: need 0 < r1 < r2");
  const num::SmoothStep q{r1, r1 + 0.9 * (r2 - r1)};
  const ModelSpace model(n + m, -delta);
  double sup = 2.0 * (n - 1) * delta;  // psi = 1 on [0, r1]
  for (int k = 0; k <= samples; ++k) {
    const double rho = q.a + (q.b - q.a) * k / samples;
    const double v = q.value(rho), d1 = q.d1(rho), d2 = q.d2(rho);
    const double psi = v * v, dpsi = 2.0 * v * d1, ddpsi = 2.0 * d1 * d1 + 2.0 * v * d2;
    const double term = -ddpsi - model_mean_curvature(model, rho) * dpsi + (2.0 + 4.0 * n) * 4.0 * d1 * d1 +
                        2.0 * (n - 1) * delta * psi;
    sup = std::max(sup, term);
  }
  return std::max(1.0, 4.0 * n * sup);
}

struct ChengYauSettings {
  double residual_tolerance = 1e-2;  // relative to the largest term; covers O(h^2) truncation
  double hypothesis_tolerance = 1e-9;
};

// Distances from p to every node of the grid.
template <int N>
std::vector<double> node_distances(const DistanceSolver<N>& S, const Grid<N>& grid, const Point<N>& p) {
  std::vector<double> d(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) d[i] = S.distance(grid.point(i), p);
  return d;
}

template <int N>
VerificationReport cheng_yau_check(const DistanceSolver<N>& S, const BakryEmeryParams& params, const MeshField<N>& u,
                                   const MeshField<N>& a, const ScalarFunction& F, double r1, double r2,
                                   const Point<N>& p, const ChengYauSettings& settings = {}) {
  params.validate();
  if (!(0.0 < r1 && r1 < r2)) throw DomainError("cheng_yau_check: need 0 < r1 < r2");
  if (a.grid.size() != u.grid.size()) throw DomainError("cheng_yau_check: u and a live on different grids");
  const auto& M = S.manifold();
  const auto& grid = u.grid;
  const auto dist = node_distances(S, grid, p);

  double res_max = 0.0, scale = 1.0, lhs = 0.0, sup_rhs = 0.0;
  double sup_X = 0.0, deficit = std::numeric_limits<double>::infinity();
  std::size_t in_r1 = 0, in_r2 = 0;
  MeshField<N> logu = u;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!u.active(i) || dist[i] >= r2) continue;
    if (!(u[i] > 0.0)) throw HypothesisViolation("cheng_yau_check: u is not positive on B_r2(p)");
    logu[i] = std::log(u[i]);
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (dist[i] >= r2 || !mesh::has_stencil(u, i) || !mesh::has_stencil(a, i)) continue;
    bool positive = true;
    for (auto v : mesh::gather(u, i)) positive = positive && v > 0.0;
    if (!positive) continue;
    const Point<N> x = grid.point(i);
    const auto G = detail::node_geometry(M, x);
    sup_X = std::max(sup_X, std::sqrt(G.X.dot(G.ginv * G.X)));
    const Mat<N> g = M.metric(x);
    deficit = std::min(deficit, detail::min_generalized_eigenvalue<N>(
                                    bakry_emery_tensor(M, params.m, x) + (N - 1) * params.delta * g, g));
    const double lap = detail::apply<N>(detail::stencil_weights<N>(G, grid.spacing), mesh::gather(u, i));
    const double Fu = F.F(u[i]);
    res_max = std::max(res_max, std::abs(lap - a[i] * Fu));
    scale = std::max({scale, std::abs(lap), std::abs(a[i] * Fu)});
    const Vec<N> da = mesh::gradient(a, i);
    const double grad_a = std::sqrt(da.dot(G.ginv * da));
    const double ratio = std::abs(Fu) / u[i];
    const double term = 8.0 * N * ((std::abs(a[i]) + grad_a) * ratio + std::abs(a[i] * F.dF(u[i]))) +
                        4.0 * std::pow(params.C + std::sqrt(ratio), 2);
    sup_rhs = std::max(sup_rhs, term);
    ++in_r2;
    if (dist[i] < r1) {
      const Vec<N> dl = mesh::gradient(logu, i);
      lhs = std::max(lhs, dl.dot(G.ginv * dl));
      ++in_r1;
    }
  }
  if (in_r1 == 0) throw DomainError("cheng_yau_check: no mesh node with a full stencil inside B_r1(p)");
  if (sup_X > params.C * (1.0 + settings.hypothesis_tolerance) + settings.hypothesis_tolerance)
    throw HypothesisViolation("cheng_yau_check: |X| = " + std::to_string(sup_X) + " exceeds C on B_r2(p)");
  if (deficit < -settings.hypothesis_tolerance)
    throw HypothesisViolation("cheng_yau_check: Ric_X^m >= -(n-1) delta g fails on B_r2(p) by " +
                              std::to_string(-deficit));
  if (res_max > settings.residual_tolerance * scale)
    throw HypothesisViolation("cheng_yau_check: Delta_X u - a F(u) residual " + std::to_string(res_max) +
                              " exceeds tolerance");

  const double C0 = cheng_yau_C0(N, params.m, params.delta, r1, r2);
  VerificationReport R;
  R.check_name = "cheng_yau";
  R.inputs = {{"params", params.to_json()}, {"r1", r1}, {"r2", r2}, {"F", F.name}};
  R.lhs = lhs;
  R.rhs = C0 + sup_rhs;
  R.margin = C0 + sup_rhs - lhs;
  R.tolerance = 0.0;
  R.resolution = {{"spacing", grid.min_spacing()}, {"nodes_r1", in_r1}, {"nodes_r2", in_r2}};
  R.notes = "C0 = " + std::to_string(C0) + "; equation residual " + std::to_string(res_max);
  return R.finalize();
}

// ---------------------------------------------------------------------------
// Quantitative maximum principle on B_r(x)

struct QmpSettings {
  double tolerance = 1e-9;
};

// `ball` is B_r(x) and U holds values on its active nodes.
template <int N>
VerificationReport quantitative_max_principle_check(const DistanceSolver<N>& S, const BakryEmeryParams& params,
                                                    const BallMesh<N>& ball, const MeshField<N>& U,
                                                    const Point<N>& x0, double b, double c,
                                                    const std::vector<double>& r0_grid,
                                                    const QmpSettings& settings = {}) {
  params.validate();
  const auto& M = S.manifold();
  const auto& grid = ball.grid();
  if (U.grid.size() != grid.size()) throw DomainError("qmp_check: U does not live on the ball mesh");
  const double tol = settings.tolerance;
  const double r = ball.radius;

  // discrete Lipschitz constant over neighbouring active pairs
  double lip = 0.0;
  const auto& off = mesh::offsets<N>();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!U.active(i)) continue;
    for (const auto& d : off) {
      const long j = grid.offset(i, d);
      if (j <= static_cast<long>(i) || !U.active(static_cast<std::size_t>(j))) continue;
      const Vec<N> a = grid.coord(i), e = grid.coord(static_cast<std::size_t>(j)) - a;
      const double len = detail::chord_length(M, grid.chart, a, e);
      lip = std::max(lip, std::abs(U[static_cast<std::size_t>(j)] - U[i]) / len);
    }
  }
  if (lip > c * (1.0 + 1e-6) + tol)
    throw HypothesisViolation("qmp_check: discrete Lipschitz constant " + std::to_string(lip) + " exceeds c");
  const Point<N> x0c = M.to_chart(M.canonical(x0), grid.chart);
  const std::size_t n0 = grid.nearest(x0c.x);
  if (!U.active(n0) || U[n0] > tol) throw HypothesisViolation("qmp_check: U(x0) <= 0 fails");
  for (std::size_t i : ball.boundary)
    if (U[i] < -tol) throw HypothesisViolation("qmp_check: U >= 0 fails on the boundary band");
  double lap_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i : ball.interior) lap_max = std::max(lap_max, drift_laplacian(M, U, i));
  if (lap_max > b + tol * (1.0 + std::abs(b)))
    throw HypothesisViolation("qmp_check: Delta_X U <= b fails (max " + std::to_string(lap_max) + ")");

  const double dx = S.distance(ball.center, x0);
  const auto G = green_barrier(ModelSpace(N + params.m, -params.delta), r);
  const std::size_t nc = grid.nearest(M.to_chart(ball.center, grid.chart).x);
  const double Ux = U[nc];
  std::vector<double> used, bounds;
  double margin = std::numeric_limits<double>::infinity();
  for (double r0 : r0_grid) {
    if (!(r0 > 0.0 && r0 < dx && r0 <= r)) continue;
    const double rhs = b * G.value(r0) + c * r0;
    used.push_back(r0);
    bounds.push_back(rhs);
    margin = std::min(margin, rhs - Ux);
  }
  if (used.empty()) throw DomainError("qmp_check: no r0 in (0, min(r, d(x, x0)))");
  VerificationReport R;
  R.check_name = "quantitative_max_principle";
  R.inputs = {{"params", params.to_json()}, {"r", r}, {"b", b}, {"c", c}, {"r0", used}, {"d_x_x0", dx}};
  R.lhs = Ux;
  R.rhs = bounds;
  R.margin = margin;
  R.tolerance = tol;
  R.resolution = {{"spacing", grid.min_spacing()}, {"interior_nodes", ball.interior.size()},
                  {"lipschitz", lip}, {"max_drift_laplacian", lap_max}};
  R.notes = "U(x) <= b G_r(r0) + c r0 for every admissible r0";
  return R.finalize();
}

}  // namespace belab
