/**
 * @file  metric.hpp
 * @brief One-parameter families of 2x2 Riemannian metrics g(x, y, s) on a
 *        rectangle — the ambient geometry seen in graph coordinates, where s
 *        is the height above the central slice s = 0.
 *
 * A family supplies g and its first four s-derivatives as callables of
 * (x, y, s). Spatial derivatives are never required analytically: every
 * consumer differentiates in x, y discretely. The fourth s-derivative is
 * optional (only the third-order coefficient needs it); when absent it is
 * approximated by a central difference of ds3_g.
 *
 * The central slice is called *minimal* when the mean-curvature trace
 * tr(g^{-1} ∂s g) vanishes at s = 0; most of the linearized theory assumes
 * this and modules that do call require_minimal().
 */
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "minsurf/grid.hpp"

namespace minsurf {

using Mat2 = Eigen::Matrix2d;

/// C-infinity radial bump: value 1 at the center, support strictly inside
/// radius R. chi(r) = exp(1 - R^2 / (R^2 - r^2)) for r < R, else 0.
struct RadialBump {
  double cx = 0.0, cy = 0.0, R = 1.0;
  double operator()(double x, double y) const {
    const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
    const double R2 = R * R;
    if (r2 >= R2) return 0.0;
    return std::exp(1.0 - R2 / (R2 - r2));
  }
};

struct MetricFamily {
  using MatrixFn = std::function<Mat2(double, double, double)>;

  std::string name;
  MatrixFn g, ds_g, ds2_g, ds3_g;
  MatrixFn ds4_g;  // optional; null means "finite-difference ds3_g"

  Mat2 ds4(double x, double y, double s) const;

  /// Throws NotSPD unless g(x, y, s) is positive definite at every grid node
  /// for s in {-smax, 0, smax}.
  void validate_spd(const Grid2D& grid, double smax) const;

  /// Throws NonMinimal unless tr(g^{-1} ds_g) = 0 at s = 0 on every node.
  void require_minimal(const Grid2D& grid, double tol = 1e-10) const;
};

// ---------------------------------------------------------------------------
// Built-in families.
// ---------------------------------------------------------------------------

/// Euclidean product metric: g = I for all s.
MetricFamily flat_family();

/// Conformally expanding slices: g = (1 + gamma s^2) I. Minimal at s = 0 with
/// stability potential q = 2 gamma.
MetricFamily gamma_family(double gamma);

/// Cubic-in-height conformal family: g = (1 + mu s^3) I. Minimal with
/// vanishing first-order coefficients; the quadratic coefficient of the
/// curvature trace is 12 mu.
MetricFamily cubic_family(double mu);

/// Localized shear of the slices: g = I + s * chi(x,y) * B with B the
/// trace-free constant matrix [[b, e], [e, -b]]. Minimal; the shear is the
/// second fundamental form of the central slice.
MetricFamily shear_family(double b, double e, const RadialBump& chi);

/// General quadratic-in-height family g = I + s P(x,y) + s^2 Q(x,y); the
/// caller is responsible for tr P = 0 if minimality is wanted.
MetricFamily quadratic_height_family(
    std::function<Mat2(double, double)> P, std::function<Mat2(double, double)> Q,
    std::string name = "quadratic_height");

/// Polynomial test family g = G0 + s G1 + s^2 G2/2! + s^3 G3/3! + s^4 G4/4!
/// with constant coefficient matrices (unit-test fodder).
MetricFamily polynomial_family(const Mat2& G0, const Mat2& G1, const Mat2& G2,
                               const Mat2& G3, const Mat2& G4);

/// Pointwise conformal rescaling c(x,y) * g(x,y,s) of an existing family.
MetricFamily conformal_scale(const MetricFamily& base,
                             std::function<double(double, double)> c,
                             std::string name = "");

}  // namespace minsurf
