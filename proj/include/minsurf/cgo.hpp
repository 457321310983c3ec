/**
 * @file  cgo.hpp
 * @brief Semiclassical complex-geometric-optics (CGO) machinery on a flat
 *        rectangular patch: holomorphic Morse phases, conjugated Cauchy
 *        inverses, the Neumann series for the remainder, oscillatory
 *        integrals, and the empirical decay calculus.
 *
 * A CGO solution of (Δ + q)v = 0 on a conformally flat patch has the form
 *
 *     v = e^{Φ/h} (a + r_h),     Φ = φ + iψ holomorphic Morse,
 *
 * with a holomorphic amplitude and a small remainder r_h.  Writing the
 * positive flat Laplacian as Δ = −4∂∂̄ and using that Φ and a are
 * holomorphic, (Δ + q)v = 0 is equivalent to
 *
 *     −4 e^{−2iψ/h} ∂( e^{2iψ/h} ∂̄ r ) + q r = −q a,
 *
 * which the conjugated inverses below turn into the fixed-point problem
 *
 *     s = b + M s,   b = −(1/4) ∂̄_ψ^{*−1}(q a),
 *                    M w = (1/4) ∂̄_ψ^{*−1}( q ∂̄_ψ^{−1} w ),
 *     r = −∂̄_ψ^{−1} s,
 *
 * solved by the truncated Neumann series s = Σ_{j=0}^{J} M^j b.  The
 * conjugated inverses are compositions of the Cauchy transforms of
 * cauchy.hpp with an oscillatory multiplier and the standard support
 * cutoff χ:
 *
 *     ∂̄_ψ^{−1}  = ∂̄⁻¹ ∘ (e^{−2iψ/h} χ ·)      ∂̄_ψ^{*−1} = ∂⁻¹ ∘ (e^{+2iψ/h} χ ·)
 *     ∂_ψ^{−1}   = ∂⁻¹ ∘ (e^{−2iψ/h} χ ·)      ∂_ψ^{*−1}  = ∂̄⁻¹ ∘ (e^{+2iψ/h} χ ·)
 *
 * The second ("tilde") solution family e^{−Φ̄/h}(ā + r̃_h) is obtained by
 * flipping the sign of the phase and conjugating the whole construction,
 * equivalently by running the series on the ∂-variants above.
 *
 * All operators act on node fields over a Grid2D; the patch is assumed small
 * enough that the metric is conformally flat there, so the flat ∂, ∂̄ are the
 * correct building blocks and the conformal factor only rescales q.
 */
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "minsurf/cauchy.hpp"
#include "minsurf/grid.hpp"

namespace minsurf {

/// Holomorphic polynomial phase Φ(z) = Σ coeff[k] z^k with a designated
/// Morse critical point z0 (Φ'(z0) = 0, Φ''(z0) ≠ 0).  The Hessian of Φ as a
/// function of (x, y) at z0 is Φ''(z0)·[[1, i], [i, −1]] and is stored split
/// into real matrices S + iA; the Hessian of ψ = Im Φ has determinant
/// −|Φ''|², so Morse for Φ and Morse for ψ coincide.
struct CGOPhase {
  std::vector<Complex> coeff;
  Complex z0{0.0, 0.0};

  /// All roots of Φ' with a nondegeneracy flag (|Φ''(root)| bounded away
  /// from zero relative to the coefficient scale).
  std::vector<Complex> critical_points;
  std::vector<bool> morse;

  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d A = Eigen::Matrix2d::Zero();

  Complex at(Complex z) const;
  Complex derivative(Complex z) const;         ///< Φ'
  Complex second_derivative(Complex z) const;  ///< Φ''

  RealField psi(const Grid2D& g) const;  ///< Im Φ on nodes
  RealField phi(const Grid2D& g) const;  ///< Re Φ on nodes

  /// ∂̄ψ sampled analytically: for holomorphic Φ, ∂̄(Im Φ) = (i/2)·conj(Φ').
  ComplexField dbar_psi(const Grid2D& g) const;

  /// max |Φ'| over the nodes = max |∇ψ| (= max |∇φ|), used by the
  /// oscillation guard.
  double max_gradient(const Grid2D& g) const;
};

/// Validates Φ'(z0) = 0 and Morse-ness and fills the derived fields.
/// Throws ConfigInvalid otherwise.
CGOPhase make_phase(std::vector<Complex> coeff, Complex z0);

/// Φ(z) = (z − z0)²/2: the standard quadratic phase, ψ has a single Morse
/// critical point at z0 and |∇ψ(z)| = |z − z0|.
CGOPhase standard_quadratic_phase(Complex z0);

/// Holomorphic polynomial amplitude with a(z) = 1 + O((z−z0)^order) at the
/// designated critical point and a zero of the same order at every other
/// critical point of the phase.
struct CGOAmplitude {
  std::vector<Complex> coeff;
  int order = 0;

  Complex at(Complex z) const;
  ComplexField field(const Grid2D& g) const;
};

/// a ≡ 1 (the right choice when the phase has a single critical point).
CGOAmplitude unit_amplitude();

/// Hermite-interpolated amplitude for a phase with several critical points:
/// a ≡ 1 mod (z−z0)^order and a ≡ 0 mod (z−z_i)^order at the others.
CGOAmplitude amplitude_for(const CGOPhase& phase, int order);

/// Truncated-Neumann-series CGO remainder data.  `r`/`s` belong to the
/// solution e^{Φ/h}(a + r), `r_tilde`/`s_tilde` to e^{−Φ̄/h}(ā + r̃).
/// `last_term` is the final Neumann summand M^J b — the witness used by
/// residual_check, since with exact right inverses the whole weighted PDE
/// residual collapses to −q·∂̄_ψ^{−1}(last_term).  `ratio` is the largest
/// measured ‖term_{j+1}‖/‖term_j‖ and `tail_bound` the geometric estimate
/// ‖term_J‖·ratio/(1−ratio) for the dropped tail of s.
struct CGOSolution {
  double h = 0.0;
  int terms = 0;  ///< Neumann applications J (series has J+1 summands)
  CGOPhase phase;
  CGOAmplitude amplitude;

  ComplexField r, s;
  ComplexField r_tilde, s_tilde;
  ComplexField last_term, last_term_tilde;
  std::vector<double> term_norms, term_norms_tilde;
  double ratio = 0.0;
  double tail_bound = 0.0;
};

/// max |∇ψ| of a sampled field by centered differences (used by the guard
/// when only the field is available; phases prefer CGOPhase::max_gradient).
double max_psi_gradient(const Grid2D& g, const RealField& psi);

/// Oscillation guard: the conjugation e^{±2iψ/h} must be resolved, i.e.
/// grid spacing ≤ h/(guard_factor·max|∇ψ|).  Throws UnderResolved with the
/// offending numbers otherwise.
void require_resolved(const Grid2D& g, double max_grad_psi, double h,
                      double guard_factor = 10.0);

/// The four conjugated inverses.  Each multiplies by the oscillatory factor
/// and the support cutoff, then applies the corresponding Cauchy transform;
/// ψ ≡ 0 reduces them to the plain transforms on core-supported fields.
ComplexField dbar_psi_inverse(const Grid2D& g, const ComplexField& f,
                              const RealField& psi, double h,
                              double margin = 0.1);
ComplexField dbar_psi_star_inverse(const Grid2D& g, const ComplexField& f,
                                   const RealField& psi, double h,
                                   double margin = 0.1);
ComplexField del_psi_inverse(const Grid2D& g, const ComplexField& f,
                             const RealField& psi, double h,
                             double margin = 0.1);
ComplexField del_psi_star_inverse(const Grid2D& g, const ComplexField& f,
                                  const RealField& psi, double h,
                                  double margin = 0.1);

/// Builds both CGO remainders by the truncated Neumann series (J ≥ 1
/// applications of M).  q must be supported where the cutoff is 1.
/// Throws SeriesDiverging if a measured term ratio reaches 0.9,
/// UnderResolved if the grid cannot carry the oscillation.
CGOSolution build_cgo(const Grid2D& g, double h, const CGOPhase& phase,
                      const CGOAmplitude& amplitude, const RealField& q,
                      int J = 8, double margin = 0.1, bool with_tilde = true);

/// Weighted PDE residual ‖e^{−φ/h}(Δ + q)v‖_{L²} / ‖a‖_{L²} for
/// v = e^{Φ/h}(a + r).  Evaluated through the algebraic identity
/// e^{−Φ/h}(Δ+q)v = −q·∂̄_ψ^{−1}(M^J b): with exact discrete right inverses
/// every interior summand telescopes away and only the series tail remains,
/// so the value reflects the truncation error and not the second-order
/// noise of applying a difference Laplacian to an oscillatory field.  The
/// honest finite-difference residual is exposed separately as fd_residual.
double residual_check(const Grid2D& g, const CGOSolution& sol,
                      const RealField& q, double margin = 0.1);

/// Direct 5-point check: assembles v = e^{Φ/h}(a + r) and returns
/// ‖e^{−φ/h}(Δ_h + q)v‖_{L²} over the cutoff core {χ_margin ≡ 1},
/// normalized by ‖a‖_{L²}.  The restriction matters: the correction r is
/// built through cutoff-multiplied inverses, so v solves the equation only
/// where the cutoff is identically 1 — on the transition band the
/// derivative of the cutoff contributes a spurious 4e^{−2iψ/h}(∂χ)s term
/// that is no defect of the construction (the solution is only ever used,
/// and the recovery integrands only ever live, on the core).  Carries the
/// O((spacing/h)²) truncation error of the stencil, so it is meaningful at
/// moderate h only.  `margin` must match the one used in build_cgo.
double fd_residual(const Grid2D& g, const CGOSolution& sol,
                   const RealField& q, double margin = 0.1);

/// Trapezoid quadrature of ∫ e^{i·multiplier·ψ/h} f dx dy.  The stationary
/// phase of the recovery step uses multiplier 4 (three combined phases) and
/// 2 (single pair).  Guarded like the inverses; the factor-4 oscillation is
/// still comfortably resolved under the default guard (≥ 15 samples per
/// period).
Complex oscillatory_integral(const Grid2D& g, const ComplexField& f,
                             const RealField& psi, double h, int multiplier);

/// Iterates of the stationary-phase expansion of ∂̄_ψ^{−1}f for a field f
/// vanishing to order deg_f at z0:
///
///     F¹ = (i/2) f / ∂̄ψ,    F^{j+1} = −(i/2) (1/∂̄ψ) ∂̄F^j,
///
/// where the quotient is the scalar with ∂̄ψ·(f/∂̄ψ) = f and the removable
/// singularity at z0 is filled by local polynomial fitting.  The minus sign
/// in the recursion comes from unrolling the integration by parts
///     ∂̄⁻¹(e^{−2iψ/h} w) = h e^{−2iψ/h} W¹ − h ∂̄⁻¹(e^{−2iψ/h} ∂̄W¹),
/// so that the decomposition holds sign-free:
///     ∂̄_ψ^{−1} f = e^{−2iψ/h} Σ_{j=1}^{K+1} h^j F^j + o(h^{K+1}).
/// Returns F¹..F^{K+1}; each iterate loses two orders,
/// deg(F^j) = deg_f − 2j + 1, so deg_f ≥ 2K+1 is required for the last one
/// to stay bounded (DegreeTooLow otherwise).  Note on the remainder: it is
/// h^{K+1} ∂̄_ψ^{−1}(∂̄F^{K+1}) up to sign, and deg(∂̄F^{K+1}) = deg_f−2K−2;
/// certifying the remainder in L² therefore wants deg_f ≥ 2K+2 (even), since
/// at the odd minimum deg_f = 2K+1 the driver ∂̄F^{K+1} is 1/|z|-singular
/// and its grid L² norm grows as the mesh tracks h.
std::vector<ComplexField> expansion_iterates(const Grid2D& g,
                                             const ComplexField& f,
                                             const CGOPhase& phase, int K,
                                             int deg_f);

/// One row of the empirical decay calculus: the modulus of
/// ∫ e^{4iψ/h}·f·(∂^l r_h or product case) against h, its fitted log-log
/// slope, and the theoretical floor it must meet (pass = slope ≥ floor−0.1).
/// h values whose slaved grid would exceed the node cap are dropped and
/// recorded.
struct SlopeRow {
  std::string label;  ///< "decay", "product-order2", "oneform-product"
  int deg = 0;        ///< vanishing order of the monomial factor of f
  int l = 0;          ///< derivative order applied to r_h
  std::vector<double> hs, values;
  std::vector<double> dropped;
  double slope = 0.0;
  double floor_level = 0.0;
  bool pass = false;
};

/// Sweep parameters: the patch is the square of the given half-width
/// centered at the phase's z0, and for each h the grid is slaved to the
/// oscillation guard (spacing = h/(guard_factor·max|∇ψ|), capped at
/// max_nodes per axis).
///
/// The default h window sits below the oscillation onset of the quadratic
/// phase on this patch: the stationary-phase mechanism only engages once
/// e^{4iψ/h} completes a full period across the test-bump support
/// (radius R ≈ 0.15), i.e. for h ≲ R²/2π ≈ 2⁻⁸.  Above that threshold the
/// integrals decay at the rate of r_h alone and fitted slopes undershoot
/// their asymptotic floors, so the default sweep is five half-octave steps
/// h = 2⁻⁸..2⁻¹⁰ with the grid slaved to the guard (up to 1849 nodes/axis).
struct CGOSweepConfig {
  double half_width = 0.25;
  int J = 8;
  double margin = 0.1;
  double guard_factor = 10.0;
  int max_nodes = 1900;
  std::vector<double> hs = {std::pow(2.0, -8.0), std::pow(2.0, -8.5),
                            std::pow(2.0, -9.0), std::pow(2.0, -9.5),
                            std::pow(2.0, -10.0)};
};

/// Runs the decay calculus: for every requested monomial degree d and
/// derivative order l ≤ d, integrates e^{4iψ/h}·χ·z^k z̄^{d−k}·∂^l r_h over
/// the h-sweep (floor ⌊(d−l)/2⌋+1), plus the two product cases:
/// a degree-4 monomial against r_h·r̃_h (floor 3) and a degree-3 monomial
/// against ∂r_h·r_h (floor 2).  r_h and r̃_h are built once per h and shared
/// across rows.
std::vector<SlopeRow> calculus_slope_suite(
    const CGOPhase& phase, const std::function<double(double, double)>& q,
    const std::vector<int>& monomial_degrees,
    const std::vector<int>& derivative_orders, const CGOSweepConfig& cfg = {});

/// C^∞ radial bump: exactly 1 for |z−c| ≤ r_flat, exactly 0 for
/// |z−c| ≥ r_zero, smoothstep in the annulus.
RealField radial_bump(const Grid2D& g, Complex c, double r_flat,
                      double r_zero);

}  // namespace minsurf
