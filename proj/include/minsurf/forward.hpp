/**
 * @file  forward.hpp
 * @brief Nonlinear graph solver: minimize the discrete area of the graph
 *        s = u(x, y) over interior node values with Dirichlet boundary data.
 *
 * The area of a graph in the product coordinates (x, s) with slice metric
 * g(x, s) is
 *     Area(u) = ∫ d(x, u) sqrt(1 + g^{-1}(x, u)(∇u, ∇u)) dx,
 * d = sqrt(det g). We discretize per grid cell with the midpoint rule: on
 * each cell the height is the corner average and the gradient is the
 * bilinear (corner-difference) average, both second-order accurate at the
 * cell center. The discrete Euler-Lagrange equations are taken to be the
 * *exact* gradient of this discrete functional, so the first-variation
 * identity, the boundary flux and the Newton linearization are all mutually
 * consistent to machine precision, while pointwise consistency with the
 * divergence-form minimal-surface operator is the usual O(h^2).
 *
 * The Hessian at u ≡ 0 over a minimal family is exactly the discrete
 * stability form  ∫ d [ g^{-1}(∇v, ∇v) + q v^2 ],  q = h1/2 — the linearized
 * solver reuses it.
 */
#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <memory>

#include "minsurf/coefficients.hpp"
#include "minsurf/grid.hpp"
#include "minsurf/metric.hpp"

namespace minsurf {

using SparseMat = Eigen::SparseMatrix<double>;

struct NewtonOptions {
  int max_iter = 40;
  double tol = 1e-11;       ///< on max_i |grad_i| / W_i over interior nodes
  int max_linesearch = 30;
  double armijo = 1e-4;
};

struct ForwardSolution {
  RealField u;         ///< full-size field, boundary = data
  int newton_iters = 0;
  double grad_norm = 0.0;  ///< scaled gradient norm at exit
  double area = 0.0;
};

class AreaProblem {
 public:
  AreaProblem(const Grid2D& grid, MetricFamily fam);

  const Grid2D& grid() const { return grid_; }
  const MetricFamily& family() const { return fam_; }

  double area(const RealField& u) const;
  /// Exact gradient of the discrete area, all nodes (boundary included).
  RealField gradient(const RealField& u) const;
  /// Exact (symmetric) Hessian of the discrete area, full size.
  SparseMat hessian(const RealField& u) const;
  /// Analytic directional derivative  dArea(u + t dir)/dt |_{t=0}.
  double first_variation(const RealField& u, const RealField& dir) const;
  /// grad_i / (W_i d_i) on interior nodes (zero on the boundary): a
  /// consistent discretization of the minimal-surface operator.
  RealField pde_residual(const RealField& u) const;
  /// Integrand value of a single cell (before the dx*dy cell measure);
  /// lets localized probes avoid re-summing the whole functional.
  double area_cell_value(int ci, int cj, const RealField& u) const;

 private:
  Grid2D grid_;
  MetricFamily fam_;
  RealField weights_;

  struct CellEval;  // per-cell derivatives of the area integrand
  CellEval cell_eval(int ci, int cj, const RealField& u, int order) const;
};

/// Interior Dirichlet solve machinery around a full-size symmetric matrix:
/// factor the interior block once, then solve A_ii x = rhs_i - A_ib b for
/// many right-hand sides. Throws EigenvalueObstruction when the interior
/// block is not positive definite (unstable background) and check_spd is set.
class DirichletSolver {
 public:
  DirichletSolver(const Grid2D& grid, const SparseMat& full, bool check_spd);

  /// rhs and boundary are full-size; the result is full-size with the
  /// boundary entries copied from `boundary`.
  RealField solve(const RealField& rhs, const RealField& boundary) const;
  ComplexField solve(const ComplexField& rhs, const ComplexField& boundary) const;

  double min_pivot() const { return min_pivot_; }
  const Grid2D& grid() const { return grid_; }

 private:
  Grid2D grid_;
  std::vector<int> interior_of_node_;  // -1 on boundary
  std::vector<int> node_of_interior_;
  SparseMat A_ii_, A_ib_;
  Eigen::SimplicialLDLT<SparseMat> ldlt_;
  double min_pivot_ = 0.0;

  Eigen::VectorXd solve_interior(const Eigen::VectorXd& rhs_i,
                                 const Eigen::VectorXd& b_b) const;
};

ForwardSolution solve_forward(const AreaProblem& prob, const RealField& boundary_data,
                              const NewtonOptions& opt = {});

/// Boundary flux of the solved graph: N(f) = ∂_ν u / sqrt(1 + |∇u|^2_g) at
/// each boundary-walk node, with ν the g-unit conormal at height s = u and
/// ∇u the one-sided/centered nodal gradient.
RealField dn_map(const AreaProblem& prob, const ForwardSolution& sol);

/// The same flux read off the area functional: central finite-difference
/// probes of Area in each boundary node value (interior frozen — legitimate
/// because the interior gradient vanishes at the solution), divided by the
/// g-metric arc weight of the node.
RealField dn_from_areas(const AreaProblem& prob, const ForwardSolution& sol,
                        double eps = 1e-6);

/// g-metric boundary arc weights (trapezoid) at height s = u: the Euclidean
/// weight times sqrt(g(t, t)) for the unit Euclidean tangent t.
RealField boundary_metric_weights(const AreaProblem& prob, const RealField& u);

}  // namespace minsurf
