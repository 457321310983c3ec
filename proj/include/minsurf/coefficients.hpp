/**
 * @file  coefficients.hpp
 * @brief Height-expansion coefficients of a metric family at the central
 *        slice s = 0 — the raw material of the linearized hierarchy.
 *
 * With G_l := ∂s^l g|_{s=0} and N(s) := g(s)^{-1}, everything follows from
 * the Leibniz recursion for derivatives of the inverse,
 *     N' = -N G' N,
 * expanded at s = 0:
 *     N1 = -N0 G1 N0
 *     N2 = -(N1 G1 N0 + N0 G2 N0 + N0 G1 N1)
 *     N3 = -(N2 G1 N0 + N0 G1 N2 + 2 N1 G2 N0 + 2 N0 G2 N1
 *            + 2 N1 G1 N1 + N0 G3 N0).
 *
 * The mean-curvature trace H(s) = tr(N(s) ∂s g(s)) then has derivatives
 *     h  = tr(N0 G1)
 *     h1 = tr(N1 G1 + N0 G2)
 *     h2 = tr(N2 G1 + 2 N1 G2 + N0 G3)
 *     h3 = tr(N3 G1 + 3 N2 G2 + 3 N1 G3 + N0 G4),
 * and the area density d(s) = sqrt(det g(s)) satisfies (log d)' = H/2, so
 * its derivatives come from exponentiating the truncated series of H/2.
 */
#pragma once

#include "minsurf/grid.hpp"
#include "minsurf/metric.hpp"

namespace minsurf {

struct CoefficientSet {
  Mat2 g;              ///< metric at s = 0
  Mat2 k;              ///< inverse metric at s = 0
  Mat2 k1, k2, k3;     ///< s-derivatives of the inverse metric at s = 0
  double h, h1, h2, h3;  ///< derivatives of the mean-curvature trace
  double d, d1, d2, d3;  ///< derivatives of the area density sqrt(det g)
  double q;              ///< stability potential h1 / 2
};

/// Evaluate all central-slice coefficients of a family at one point.
CoefficientSet eval_coefficients(const MetricFamily& fam, double x, double y);

/// Coefficients sampled over a whole grid (index = flat node id).
std::vector<CoefficientSet> eval_coefficients(const MetricFamily& fam, const Grid2D& grid);

}  // namespace minsurf
