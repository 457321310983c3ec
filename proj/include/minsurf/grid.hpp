/**
 * @file  grid.hpp
 * @brief Uniform tensor-product grids on axis-aligned rectangles, flat
 *        node-centered fields, trapezoid quadrature and discrete calculus.
 *
 * Conventions used across the whole library:
 *   - nodes include the boundary; node (i,j) sits at (x0 + i*dx, y0 + j*dy);
 *   - fields are stored flat, row-major with the x index fastest:
 *     id(i,j) = j*nx + i;
 *   - first derivatives are centered three-point stencils in the interior
 *     and one-sided three-point (second-order) stencils on the boundary;
 *   - volume integrals use the tensor trapezoid rule, boundary line
 *     integrals use the trapezoid rule along the boundary polyline.
 */
#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <vector>

#include "minsurf/errors.hpp"

namespace minsurf {

using RealField = Eigen::ArrayXd;
using ComplexField = Eigen::ArrayXcd;
using Complex = std::complex<double>;

struct Grid2D {
  int nx = 0, ny = 0;
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;

  static Grid2D box(double x0, double x1, double y0, double y1, int nx, int ny);
  /// Square [-half, half]^2 with n nodes per axis.
  static Grid2D square(double half, int n) {
    return box(-half, half, -half, half, n, n);
  }

  double dx() const { return (x1 - x0) / (nx - 1); }
  double dy() const { return (y1 - y0) / (ny - 1); }
  double x(int i) const { return x0 + i * dx(); }
  double y(int j) const { return y0 + j * dy(); }
  int id(int i, int j) const { return j * nx + i; }
  int size() const { return nx * ny; }
  bool on_boundary(int i, int j) const {
    return i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
  }
  bool is_corner(int i, int j) const {
    return (i == 0 || i == nx - 1) && (j == 0 || j == ny - 1);
  }
  /// Node count along the boundary polyline.
  int boundary_size() const { return 2 * (nx + ny) - 4; }
};

/// Tensor trapezoid weights: dx*dy scaled by 1, 1/2, 1/4 (interior, edge,
/// corner). Integrates C^2 integrands to second order.
RealField trapezoid_weights(const Grid2D& g);

/// Boundary nodes walked counterclockwise from (0,0): bottom edge, right
/// edge, top edge (reversed), left edge (reversed). For each node we store
/// the flat grid id, the Euclidean arc-length trapezoid weight, and the
/// outward Euclidean unit normal (corner normals are the normalized
/// diagonal average of the two adjacent edge normals).
struct BoundaryIndex {
  std::vector<int> node;
  std::vector<double> weight;
  std::vector<std::array<double, 2>> normal;
  std::vector<bool> corner;

  int size() const { return static_cast<int>(node.size()); }
};

BoundaryIndex boundary_index(const Grid2D& g);

/// x-derivative of a node field: centered inside, one-sided second order on
/// the two x-extreme columns.
template <class Field>
Field grad_x(const Grid2D& g, const Field& u) {
  Field out(u.size());
  const double inv2 = 1.0 / (2.0 * g.dx());
  for (int j = 0; j < g.ny; ++j) {
    const int row = j * g.nx;
    out[row] = (-3.0 * u[row] + 4.0 * u[row + 1] - u[row + 2]) * inv2;
    for (int i = 1; i < g.nx - 1; ++i)
      out[row + i] = (u[row + i + 1] - u[row + i - 1]) * inv2;
    const int e = row + g.nx - 1;
    out[e] = (3.0 * u[e] - 4.0 * u[e - 1] + u[e - 2]) * inv2;
  }
  return out;
}

template <class Field>
Field grad_y(const Grid2D& g, const Field& u) {
  Field out(u.size());
  const double inv2 = 1.0 / (2.0 * g.dy());
  const int nx = g.nx;
  for (int i = 0; i < nx; ++i) {
    out[i] = (-3.0 * u[i] + 4.0 * u[i + nx] - u[i + 2 * nx]) * inv2;
    const int top = (g.ny - 1) * nx + i;
    out[top] = (3.0 * u[top] - 4.0 * u[top - nx] + u[top - 2 * nx]) * inv2;
  }
  for (int j = 1; j < g.ny - 1; ++j)
    for (int i = 0; i < nx; ++i) {
      const int id = j * nx + i;
      out[id] = (u[id + nx] - u[id - nx]) * inv2;
    }
  return out;
}

/// Trapezoid integral of a node field.
double integrate(const Grid2D& g, const RealField& f);
Complex integrate(const Grid2D& g, const ComplexField& f);

/// Trapezoid-weighted L2 norm.
double l2_norm(const Grid2D& g, const RealField& f);
double l2_norm(const Grid2D& g, const ComplexField& f);

/// Trapezoid-weighted Lp norm (p >= 1).
double lp_norm(const Grid2D& g, const ComplexField& f, double p);

/// || a - b ||_2 / || b ||_2 with trapezoid weights.
double rel_l2_error(const Grid2D& g, const RealField& a, const RealField& b);

/// Sample a callable (x, y) -> scalar on all nodes.
template <class F>
auto sample(const Grid2D& g, F&& f) {
  using T = decltype(f(0.0, 0.0));
  Eigen::Array<T, Eigen::Dynamic, 1> out(g.size());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) out[g.id(i, j)] = f(g.x(i), g.y(j));
  return out;
}

/// Least-squares slope of log2|v| against log2(h) — the observed order of a
/// quantity expected to behave like C * h^p. Entries with |v| = 0 are
/// rejected (they would make the fit meaningless).
double fit_log_slope(const std::vector<double>& h, const std::vector<double>& v);

}  // namespace minsurf
