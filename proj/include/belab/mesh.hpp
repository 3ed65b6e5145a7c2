#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "belab/errors.hpp"
#include "belab/geometry.hpp"

namespace belab {

// Structured lattice over a chart region. Periodic axes wrap with count * spacing = period.
template <int N>
struct Grid {
  int chart = 0;
  Vec<N> origin = Vec<N>::Zero();
  Vec<N> spacing = Vec<N>::Ones();
  std::array<int, N> count{};
  std::array<bool, N> periodic{};

  using Index = std::array<int, N>;

  std::size_t size() const {
    std::size_t s = 1;
    for (int k = 0; k < N; ++k) s *= static_cast<std::size_t>(count[k]);
    return s;
  }

  Index multi(std::size_t i) const {
    Index m{};
    for (int k = 0; k < N; ++k) {
      m[k] = static_cast<int>(i % static_cast<std::size_t>(count[k]));
      i /= static_cast<std::size_t>(count[k]);
    }
    return m;
  }

  std::size_t index(const Index& m) const {
    std::size_t i = 0;
    for (int k = N - 1; k >= 0; --k) i = i * static_cast<std::size_t>(count[k]) + static_cast<std::size_t>(m[k]);
    return i;
  }

  Vec<N> coord(std::size_t i) const {
    const Index m = multi(i);
    Vec<N> x;
    for (int k = 0; k < N; ++k) x[k] = origin[k] + m[k] * spacing[k];
    return x;
  }

  Point<N> point(std::size_t i) const { return Point<N>(coord(i), chart); }

  // Node at an integer offset, or -1 when it falls off a non-periodic edge.
  long offset(std::size_t i, const Index& d) const {
    Index m = multi(i);
    for (int k = 0; k < N; ++k) {
      int v = m[k] + d[k];
      if (periodic[k]) {
        v %= count[k];
        if (v < 0) v += count[k];
      } else if (v < 0 || v >= count[k]) {
        return -1;
      }
      m[k] = v;
    }
    return static_cast<long>(index(m));
  }

  // Nearest node to coordinates x (clamped on non-periodic axes).
  std::size_t nearest(const Vec<N>& x) const {
    Index m{};
    for (int k = 0; k < N; ++k) {
      int v = static_cast<int>(std::lround((x[k] - origin[k]) / spacing[k]));
      if (periodic[k]) {
        v %= count[k];
        if (v < 0) v += count[k];
      } else {
        v = std::clamp(v, 0, count[k] - 1);
      }
      m[k] = v;
    }
    return index(m);
  }

  double cell_volume() const {
    double v = 1.0;
    for (int k = 0; k < N; ++k) v *= spacing[k];
    return v;
  }

  double min_spacing() const { return spacing.minCoeff(); }

  void validate() const {
    for (int k = 0; k < N; ++k) {
      if (!(spacing[k] > 0.0)) throw DomainError("Grid: spacing must be > 0");
      if (count[k] < 3) throw DomainError("Grid: need at least 3 nodes per axis");
    }
  }

  // Square patch of 2 * half + 1 nodes per axis centred on c, no wrapping.
  static Grid patch(int chart, const Vec<N>& c, double h, int half) {
    Grid G;
    G.chart = chart;
    G.spacing = Vec<N>::Constant(h);
    G.origin = c - Vec<N>::Constant(h * half);
    G.count.fill(2 * half + 1);
    G.periodic.fill(false);
    G.validate();
    return G;
  }

  // Patch with per-axis half widths (in nodes).
  static Grid patch(int chart, const Vec<N>& c, double h, const Index& half) {
    Grid G;
    G.chart = chart;
    G.spacing = Vec<N>::Constant(h);
    for (int k = 0; k < N; ++k) {
      G.origin[k] = c[k] - h * half[k];
      G.count[k] = 2 * half[k] + 1;
    }
    G.periodic.fill(false);
    G.validate();
    return G;
  }

  // Whole chart of a compact single-chart manifold, every axis periodic.
  static Grid periodic_chart(const ChartManifold<N>& M, int per_axis) {
    if (M.chart_count() != 1) throw DomainError("Grid::periodic_chart: needs a single chart");
    const auto& ch = M.chart(0);
    Grid G;
    for (int k = 0; k < N; ++k) {
      if (!ch.periodic[k]) throw DomainError("Grid::periodic_chart: every axis must be periodic");
      G.origin[k] = ch.lo[k];
      G.spacing[k] = (ch.hi[k] - ch.lo[k]) / per_axis;
      G.count[k] = per_axis;
      G.periodic[k] = true;
    }
    G.validate();
    return G;
  }
};

enum class NodeKind : std::uint8_t { Interior = 0, Boundary = 1, Inactive = 2 };

// Scalar values on a grid plus a per-node role; Boundary nodes carry Dirichlet data.
template <int N>
struct MeshField {
  Grid<N> grid;
  Eigen::VectorXd values;
  std::vector<NodeKind> kind;

  MeshField() = default;
  explicit MeshField(const Grid<N>& g)
      : grid(g), values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()))), kind(g.size(), NodeKind::Interior) {}

  static MeshField sample(const Grid<N>& g, const std::function<double(const Vec<N>&)>& f) {
    MeshField u(g);
    for (std::size_t i = 0; i < g.size(); ++i) u.values[static_cast<Eigen::Index>(i)] = f(g.coord(i));
    return u;
  }

  std::size_t size() const { return grid.size(); }
  double operator[](std::size_t i) const { return values[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return values[static_cast<Eigen::Index>(i)]; }
  bool active(std::size_t i) const { return kind[i] != NodeKind::Inactive; }

  void validate() const {
    grid.validate();
    if (static_cast<std::size_t>(values.size()) != grid.size() || kind.size() != grid.size())
      throw DomainError("MeshField: size mismatch");
    for (std::size_t i = 0; i < size(); ++i)
      if (active(i) && !std::isfinite((*this)[i])) throw DomainError("MeshField: non-finite value at active node");
  }

  // Columns x0..x{N-1}, value, kind; inactive nodes are skipped.
  void write_csv(std::ostream& os) const {
    for (int k = 0; k < N; ++k) os << "x" << k << ",";
    os << "value,kind\n";
    os << std::setprecision(17);
    for (std::size_t i = 0; i < size(); ++i) {
      if (!active(i)) continue;
      const Vec<N> x = grid.coord(i);
      for (int k = 0; k < N; ++k) os << x[k] << ",";
      os << (*this)[i] << "," << (kind[i] == NodeKind::Boundary ? "boundary" : "interior") << "\n";
    }
  }
};

namespace mesh {

template <int N>
constexpr int stencil_size() {
  int s = 1;
  for (int k = 0; k < N; ++k) s *= 3;
  return s;
}

// Offsets {-1, 0, 1}^N in lexicographic order; the centre sits at stencil_size / 2.
template <int N>
const std::array<typename Grid<N>::Index, stencil_size<N>()>& offsets() {
  static const auto table = [] {
    std::array<typename Grid<N>::Index, stencil_size<N>()> t{};
    for (int s = 0; s < stencil_size<N>(); ++s) {
      int r = s;
      for (int k = 0; k < N; ++k) {
        t[static_cast<std::size_t>(s)][k] = r % 3 - 1;
        r /= 3;
      }
    }
    return t;
  }();
  return table;
}

template <int N>
int offset_slot(const typename Grid<N>::Index& d) {
  int s = 0, w = 1;
  for (int k = 0; k < N; ++k) {
    s += (d[k] + 1) * w;
    w *= 3;
  }
  return s;
}

// Node indices of the 3^N neighbourhood; false if any is missing or inactive.
template <int N>
bool neighbourhood(const MeshField<N>& u, std::size_t i, std::array<long, stencil_size<N>()>& nb) {
  const auto& off = offsets<N>();
  for (std::size_t s = 0; s < off.size(); ++s) {
    nb[s] = u.grid.offset(i, off[s]);
    if (nb[s] < 0 || !u.active(static_cast<std::size_t>(nb[s]))) return false;
  }
  return true;
}

template <int N>
bool has_stencil(const MeshField<N>& u, std::size_t i) {
  std::array<long, stencil_size<N>()> nb;
  return u.active(i) && neighbourhood(u, i, nb);
}

// True if every node within `depth` grid steps is present and active.
template <int N>
bool has_stencil(const MeshField<N>& u, std::size_t i, int depth) {
  if (depth <= 1) return has_stencil(u, i);
  typename Grid<N>::Index d{};
  d.fill(-depth);
  for (;;) {
    const long j = u.grid.offset(i, d);
    if (j < 0 || !u.active(static_cast<std::size_t>(j))) return false;
    int k = 0;
    while (k < N && ++d[k] > depth) d[k++] = -depth;
    if (k == N) return true;
  }
}

// Central-difference coordinate gradient and second derivatives from 3^N values.
template <int N>
Vec<N> gradient_from(const std::array<double, stencil_size<N>()>& v, const Vec<N>& h) {
  Vec<N> g;
  for (int k = 0; k < N; ++k) {
    typename Grid<N>::Index p{}, m{};
    p[k] = 1;
    m[k] = -1;
    g[k] = (v[static_cast<std::size_t>(offset_slot<N>(p))] - v[static_cast<std::size_t>(offset_slot<N>(m))]) / (2.0 * h[k]);
  }
  return g;
}

template <int N>
Mat<N> second_from(const std::array<double, stencil_size<N>()>& v, const Vec<N>& h) {
  Mat<N> H;
  const double c = v[static_cast<std::size_t>(stencil_size<N>() / 2)];
  for (int i = 0; i < N; ++i)
    for (int j = i; j < N; ++j) {
      if (i == j) {
        typename Grid<N>::Index p{}, m{};
        p[i] = 1;
        m[i] = -1;
        H(i, i) = (v[static_cast<std::size_t>(offset_slot<N>(p))] - 2.0 * c + v[static_cast<std::size_t>(offset_slot<N>(m))]) / (h[i] * h[i]);
      } else {
        double s = 0.0;
        for (int a : {-1, 1})
          for (int b : {-1, 1}) {
            typename Grid<N>::Index d{};
            d[i] = a;
            d[j] = b;
            s += a * b * v[static_cast<std::size_t>(offset_slot<N>(d))];
          }
        H(i, j) = H(j, i) = s / (4.0 * h[i] * h[j]);
      }
    }
  return H;
}

template <int N>
std::array<double, stencil_size<N>()> gather(const MeshField<N>& u, std::size_t i) {
  std::array<long, stencil_size<N>()> nb;
  if (!neighbourhood(u, i, nb)) throw DomainError("mesh: node lacks a full neighbourhood");
  std::array<double, stencil_size<N>()> v;
  for (std::size_t s = 0; s < nb.size(); ++s) v[s] = u[static_cast<std::size_t>(nb[s])];
  return v;
}

// Coordinate gradient (partial derivatives) at node i.
template <int N>
Vec<N> gradient(const MeshField<N>& u, std::size_t i) {
  return gradient_from<N>(gather(u, i), u.grid.spacing);
}

// Coordinate second derivatives at node i.
template <int N>
Mat<N> coordinate_hessian(const MeshField<N>& u, std::size_t i) {
  return second_from<N>(gather(u, i), u.grid.spacing);
}

}  // namespace mesh
}  // namespace belab
