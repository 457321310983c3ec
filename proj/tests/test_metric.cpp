/**
 * @file  test_metric.cpp
 * @brief Metric families: SPD/minimality validation, bump support, the
 *        optional fourth-derivative fallback, conformal rescaling.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "minsurf/metric.hpp"

using namespace minsurf;

TEST_CASE("built-in families are SPD and minimal at the central slice") {
  const Grid2D g = Grid2D::square(1.0, 17);
  for (const MetricFamily& f :
       {flat_family(), gamma_family(0.3), cubic_family(0.2),
        shear_family(0.2, 0.45, RadialBump{0.1, -0.2, 0.5})}) {
    CHECK_NOTHROW(f.validate_spd(g, 0.5));
    CHECK_NOTHROW(f.require_minimal(g));
  }
}

TEST_CASE("SPD validation catches an indefinite slice") {
  // g = (1 - 2 s) I turns negative for s > 1/2.
  Mat2 Z = Mat2::Zero();
  MetricFamily f = polynomial_family(Mat2::Identity(), -2.0 * Mat2::Identity(), Z, Z, Z);
  const Grid2D g = Grid2D::square(1.0, 5);
  CHECK_NOTHROW(f.validate_spd(g, 0.2));
  CHECK_THROWS_AS(f.validate_spd(g, 0.8), NotSPD);
}

TEST_CASE("minimality check rejects a slice with nonzero curvature trace") {
  Mat2 Z = Mat2::Zero();
  Mat2 G1;
  G1 << 0.3, 0.0, 0.0, 0.1;  // tr(g^-1 G1) = 0.4 != 0
  MetricFamily f = polynomial_family(Mat2::Identity(), G1, Z, Z, Z);
  const Grid2D g = Grid2D::square(1.0, 5);
  CHECK_THROWS_AS(f.require_minimal(g), NonMinimal);
}

TEST_CASE("radial bump: plateau value, compact support, smooth falloff") {
  const RadialBump chi{0.5, -0.25, 0.4};
  CHECK(chi(0.5, -0.25) == doctest::Approx(1.0));
  CHECK(chi(0.5 + 0.4, -0.25) == 0.0);
  CHECK(chi(0.5 + 0.41, -0.25) == 0.0);
  // Monotone decay along a ray and tiny values near the support edge.
  double prev = 1.0;
  for (double t : {0.1, 0.2, 0.3, 0.39}) {
    const double v = chi(0.5 + t, -0.25);
    CHECK(v < prev);
    prev = v;
  }
  CHECK(chi(0.5 + 0.399, -0.25) < 1e-80);
}

TEST_CASE("fourth-derivative fallback agrees with an analytic ds4") {
  Mat2 G0 = Mat2::Identity(), G1, G2, G3, G4;
  G1 << 0.4, -0.2, -0.2, 0.1;
  G2 << -0.3, 0.5, 0.5, 0.8;
  G3 << 0.7, -0.1, -0.1, 0.2;
  G4 << -0.6, 0.25, 0.25, 0.9;
  MetricFamily f = polynomial_family(G0, G1, G2, G3, G4);
  MetricFamily f_no4 = f;
  f_no4.ds4_g = nullptr;
  const Mat2 a = f.ds4(0.0, 0.0, 0.0);
  const Mat2 b = f_no4.ds4(0.0, 0.0, 0.0);
  CHECK((a - b).norm() < 1e-8);
  CHECK((a - G4).norm() < 1e-14);
}

TEST_CASE("conformal rescaling multiplies every derivative by c(x,y)") {
  const MetricFamily base = gamma_family(0.25);
  const MetricFamily scaled =
      conformal_scale(base, [](double x, double y) { return 1.0 + 0.1 * x - 0.05 * y; });
  const double x = 0.3, y = -0.7, s = 0.2, c = 1.0 + 0.1 * x - 0.05 * y;
  CHECK((scaled.g(x, y, s) - c * base.g(x, y, s)).norm() < 1e-15);
  CHECK((scaled.ds2_g(x, y, s) - c * base.ds2_g(x, y, s)).norm() < 1e-15);
  CHECK((scaled.ds4(x, y, s) - c * base.ds4(x, y, s)).norm() < 1e-15);
}
