/**
 * @file  cauchy.hpp
 * @brief Discrete Cauchy transforms: right inverses of the Wirtinger
 *        operators ∂̄ = (∂x + i∂y)/2 and ∂ = (∂x − i∂y)/2 for compactly
 *        supported complex grid fields.
 *
 * The continuum right inverse of ∂̄ is convolution with the fundamental
 * solution 1/(πz):   (∂̄⁻¹f)(w) = (1/π) ∬ f(z)/(w−z) dA(z).
 * Discretely, f is piecewise constant on the dx×dy cell centered at each
 * node and the kernel is integrated exactly over every cell: the double
 * primitive P(z) = −i z (log z − 1) satisfies ∂²P/∂x∂y = 1/z, so the exact
 * integral over a rectangle is a four-corner difference of P. Rectangles
 * crossing the branch cut of the logarithm are split at y = 0 and their
 * y = 0 corners evaluated with signed zeros, which pins each piece to one
 * branch; the cell containing the singularity needs no further special
 * casing (z log z → 0, the singularity is integrable and the primitive is
 * continuous).
 *
 * Two evaluation paths share the same kernel table: direct summation
 * (O(N²), the reference) and zero-padded FFT convolution (O(N log N), the
 * default); they agree to roundoff. ∂⁻¹ is the conjugate transform,
 * ∂⁻¹f = conj(∂̄⁻¹ conj f).
 */
#pragma once

#include "minsurf/errors.hpp"
#include "minsurf/grid.hpp"

namespace minsurf {

/// ∂̄ = (∂x + i∂y)/2 with the grid's centered/one-sided stencils.
ComplexField dbar(const Grid2D& g, const ComplexField& u);

/// ∂ = (∂x − i∂y)/2.
ComplexField del(const Grid2D& g, const ComplexField& u);

/// Exact mean of 1/z over [x0,x1]×[y0,y1]; the rectangle may contain 0.
Complex cell_mean_inverse_z(double x0, double x1, double y0, double y1);

enum class ConvPath { direct, fft };

/// Right inverse of ∂̄ on compactly supported fields. The input must be
/// negligible (≤ 1e-10 of its own max) on the margin strip, a band of
/// relative width `margin` along each side of the box; otherwise
/// SupportViolation. Output is defined on the whole grid.
ComplexField dbar_inverse(const Grid2D& g, const ComplexField& f,
                          ConvPath path = ConvPath::fft, double margin = 0.1);

/// Right inverse of ∂ under the same support contract.
ComplexField del_inverse(const Grid2D& g, const ComplexField& f,
                         ConvPath path = ConvPath::fft, double margin = 0.1);

/// Smooth box cutoff: exactly 1 on the box shrunk by twice the margin,
/// exactly 0 on the margin strip, C^∞ smoothstep transition in between.
/// As in the inverses above, `margin` is a fraction of the domain extent
/// per axis (strip width = margin·(x1−x0) horizontally, margin·(y1−y0)
/// vertically), so the same value describes the guard and the cutoff.
/// This is the extension operator that puts fields into the support class
/// dbar_inverse expects.
RealField support_cutoff(const Grid2D& g, double margin = 0.1);

}  // namespace minsurf
