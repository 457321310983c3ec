/**
 * @file linearize.hpp
 * @brief First, second and third ε-derivatives of the graph solution map,
 *        solved through one factorization of the stability operator.
 *
 * On a minimal leaf the solution u(ε) of the graph equation with boundary
 * data Σ_a ε_a f_a is smooth in ε, and its directional derivatives
 *
 *     v^j     = ∂_{ε_j} u |_0,
 *     w^{jk}  = ∂²_{ε_j ε_k} u |_0,
 *     w^{jkl} = ∂³_{ε_j ε_k ε_l} u |_0
 *
 * satisfy a triangular chain of Dirichlet problems for the stability
 * operator  Δ_g + q,  q = h1/2  (Δ_g is the positive Laplace–Beltrami
 * operator of the leaf metric g = g(x, 0)):
 *
 *     (Δ_g + q) v^j     = 0,            v^j|_∂     = f_j,
 *     (Δ_g + q) w^{jk}  = -I2,          w^{jk}|_∂  = 0,
 *     (Δ_g + q) w^{jkl} = -I3,          w^{jkl}|_∂ = 0,
 *
 * where the sources collect the couplings through the height expansion of
 * the metric (round index brackets = symmetrization by plain sums):
 *
 *     I2 = P^{(j} v^{k)} + k1(∇v^j, ∇v^k) + ½ h2 v^j v^k,
 *     P^j F = -d⁻¹ ∇·( d v^j k1 ∇F ),
 *
 *     I3 = P^{(jl} v^{k)} + P^{(j} w^{kl)}
 *          + k2(∇v^{(j}, ∇v^k) v^{l)} + k1(∇v^{(j}, ∇w^{kl)})
 *          + ½ h1 k(∇v^{(j}, ∇v^k) v^{l)} + ½ h2 w^{(jk} v^{l)}
 *          + ½ h3 v^j v^k v^l,
 *
 *     P^{jl} F = -k(∇(d⁻¹ d2 v^j v^l), ∇F) - d⁻¹ ∇·( d v^j v^l k2 ∇F )
 *                - d⁻¹ ∇·( d w^{jl} k1 ∇F ) + d⁻¹ ∇·( d k(∇v^j, ∇v^l) k ∇F ).
 *
 * Discretely every solve reuses one LDLT factorization of the area Hessian
 * at u ≡ 0 (the exact discrete stability form). The sources are assembled
 * in weak form with the same cell quadrature the area functional uses
 * (corner-averaged values, per-cell mean gradients, midpoint coefficients):
 * after integrating the divergence blocks of P^j and P^{jl} by parts
 * against an interior hat function, no coefficient derivatives remain, and
 * on a minimal leaf the second-order load reproduces the third directional
 * derivative of the discrete area exactly (d·k1 and d·h2/2 are its mixed
 * Taylor coefficients). The first two orders therefore match the
 * ε-differenced nonlinear solver to stencil/solver noise rather than to
 * discretization accuracy; the third order agrees to O(h²) with a small
 * constant. Everything is linear (resp. multilinear) in the input fields,
 * so complex overloads simply run the same arithmetic.
 */
#pragma once

#include <array>
#include <memory>
#include <vector>

#include "minsurf/coefficients.hpp"
#include "minsurf/forward.hpp"
#include "minsurf/grid.hpp"
#include "minsurf/metric.hpp"

namespace minsurf {

/// One solved linearized problem: the order, which data slots it
/// differentiates (unused entries -1), the pointwise right-hand side of
/// (Δ_g + q) w = rhs (nodal field, recorded for diagnostics; the solve
/// itself runs off the weak-form load), and the solution field.
struct LinearizedSystem {
  int order = 1;
  std::array<int, 3> indices{{-1, -1, -1}};
  RealField rhs;
  RealField solution;
};

/// Shared engine for the hierarchy: evaluates the coefficient fields once,
/// factors the stability operator once (an unstable or resonant leaf
/// surfaces as EigenvalueObstruction), then serves the three orders and
/// their boundary fluxes.
class LinearizedHierarchy {
 public:
  struct Fields;  // flattened nodal coefficient arrays (implementation detail)

  LinearizedHierarchy(const Grid2D& grid, const MetricFamily& family);
  ~LinearizedHierarchy();

  const Grid2D& grid() const { return grid_; }
  const MetricFamily& family() const { return family_; }
  const DirichletSolver& solver() const { return *solver_; }
  const AreaProblem& problem() const { return *problem_; }
  const std::vector<CoefficientSet>& coefficients() const { return coef_; }

  /// (Δ_g + q) v = 0 with v = f on the boundary (interior entries of f are
  /// ignored).
  RealField solve_first(const RealField& f) const;
  ComplexField solve_first(const ComplexField& f) const;

  /// (Δ_g + q) w = -I2[v_j, v_k], w|_∂ = 0.
  RealField solve_second(const RealField& vj, const RealField& vk) const;
  ComplexField solve_second(const ComplexField& vj, const ComplexField& vk) const;

  /// (Δ_g + q) w = -I3, w|_∂ = 0. The w's are the pair solutions of the
  /// matching index pairs.
  RealField solve_third(const RealField& vj, const RealField& vk,
                        const RealField& vl, const RealField& wjk,
                        const RealField& wjl, const RealField& wkl) const;
  ComplexField solve_third(const ComplexField& vj, const ComplexField& vk,
                           const ComplexField& vl, const ComplexField& wjk,
                           const ComplexField& wjl, const ComplexField& wkl) const;

  /// The pointwise right-hand sides -I2 and -I3, assembled with nodal
  /// centered stencils (boundary rows included). These are the strong-form
  /// sources; the solves use the equivalent weak-form loads, so against
  /// these fields a solution carries an O(h²) strong/weak consistency
  /// defect (see operator_residual).
  RealField second_rhs(const RealField& vj, const RealField& vk) const;
  ComplexField second_rhs(const ComplexField& vj, const ComplexField& vk) const;
  RealField third_rhs(const RealField& vj, const RealField& vk,
                      const RealField& vl, const RealField& wjk,
                      const RealField& wjl, const RealField& wkl) const;
  ComplexField third_rhs(const ComplexField& vj, const ComplexField& vk,
                         const ComplexField& vl, const ComplexField& wjk,
                         const ComplexField& wjl, const ComplexField& wkl) const;

  /// Bare conormal derivative k(ν, ∇w)/√k(ν,ν), indexed along the
  /// counterclockwise boundary walk with the same layout and corner
  /// convention as dn_map (ν the Euclidean outward normal, one-sided
  /// interior stencils).
  RealField conormal_derivative(const RealField& w) const;
  ComplexField conormal_derivative(const ComplexField& w) const;

  /// Interior defect (Δ_g + q) w - rhs in PDE units, read off the Hessian
  /// rows; zero on the boundary. For a field returned by the weak-form
  /// solves and the matching strong rhs this measures the strong/weak
  /// consistency defect, O(h²). Diagnostic for residual tables.
  RealField operator_residual(const RealField& w, const RealField& rhs) const;

  /// Full triangular sweep for the given data: all v^j, then w^{jk}
  /// (j ≤ k), then w^{jkl} (j ≤ k ≤ l), up to max_order ∈ {1, 2, 3}.
  std::vector<LinearizedSystem> solve_hierarchy(const std::vector<RealField>& fs,
                                                int max_order) const;

 private:
  template <class Field>
  Field rhs2_impl(const Field& vj, const Field& vk) const;
  template <class Field>
  Field rhs3_impl(const Field& vj, const Field& vk, const Field& vl,
                  const Field& wjk, const Field& wjl, const Field& wkl) const;
  template <class Field>
  Field weak_rhs2(const Field& vj, const Field& vk) const;
  template <class Field>
  Field weak_rhs3(const Field& vj, const Field& vk, const Field& vl,
                  const Field& wjk, const Field& wjl, const Field& wkl) const;
  template <class Field>
  Field solve_load(const Field& load) const;
  template <class Field>
  Field conormal_impl(const Field& w) const;

  Grid2D grid_;
  MetricFamily family_;
  std::vector<CoefficientSet> coef_;       // at the nodes
  std::vector<CoefficientSet> cell_coef_;  // at the cell midpoints
  std::unique_ptr<Fields> f_;
  std::unique_ptr<AreaProblem> problem_;
  SparseMat hessian_;
  std::unique_ptr<DirichletSolver> solver_;
  RealField weights_;
  BoundaryIndex boundary_;
};

/// P^j w = -d⁻¹ ∇·( d vj k1 ∇w ) with explicit nodal coefficients
/// (index = flat node id). Building block of the higher-order sources,
/// exposed for direct verification against quadrature oracles.
RealField apply_Pj(const Grid2D& grid, const std::vector<CoefficientSet>& coef,
                   const RealField& vj, const RealField& w);

/// Central mixed ε-differences of the nonlinear solution map with data
/// Σ_a ε_a fs[a] (fs.size() == order): order 1 → v, 2 → w^{12}, 3 → w^{123}.
/// Richardson-extrapolated over {eps, eps/2} when `richardson` is set, so
/// the stencil costs 2^order (plain) or 2^(order+1) (extrapolated) Newton
/// solves; independent solves are dispatched over `threads` workers.
/// eps = 0 picks the per-order default {1e-2, 1e-2, 3e-2}.
RealField fd_linearize(const Grid2D& grid, const MetricFamily& family, int order,
                       const std::vector<RealField>& fs, double eps = 0.0,
                       const NewtonOptions& opt = {}, int threads = 1,
                       bool richardson = true);

/// Same ε-stencil applied to the nonlinear flux map dn_map ∘ solve: the
/// ε-derivatives of the boundary flux. Corner entries follow the dn_map
/// corner convention and should be excluded from pointwise comparisons.
RealField fd_dn_derivative(const Grid2D& grid, const MetricFamily& family,
                           int order, const std::vector<RealField>& fs,
                           double eps = 0.0, const NewtonOptions& opt = {},
                           int threads = 1, bool richardson = true);

/// The PDE route to the same boundary object: the ε-derivative of the flux
/// map assembled from the linearized solutions. Orders 1 and 2 are the bare
/// conormals of v and w^{12}; order 3 subtracts the cubic correction of the
/// flux normalization,
///     ∂³ flux = ∂_ν w^{123} - Σ_sym ∂_ν v^{(1} · k(∇v^2, ∇v^{3)}).
/// Exact ε-derivative of the flux map whenever the s-derivatives of the
/// metric vanish near ∂Ω (compactly supported perturbation families);
/// otherwise the flux normalization contributes further boundary terms that
/// are not included here.
RealField dn_derivative(const LinearizedHierarchy& sys, int order,
                        const std::vector<RealField>& fs);

}  // namespace minsurf
