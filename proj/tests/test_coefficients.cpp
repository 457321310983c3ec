/**
 * @file  test_coefficients.cpp
 * @brief Central-slice coefficient calculus against independently derived
 *        values (computer algebra) and a finite-difference property oracle.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "minsurf/coefficients.hpp"

using namespace minsurf;

namespace {

// Finite-difference oracle: derivatives of f(s) at 0 by 4th-order central
// stencils, step tuned so truncation and roundoff are both ~1e-9.
template <class F>
double fd_deriv(F&& f, int order, double step) {
  auto d1 = [&](auto&& fn, double s) {
    return (fn(s - 2 * step) - 8 * fn(s - step) + 8 * fn(s + step) - fn(s + 2 * step)) /
           (12 * step);
  };
  if (order == 1) return d1(f, 0.0);
  if (order == 2) {
    auto g = [&](double s) { return d1(f, s); };
    return d1(g, 0.0);
  }
  auto g = [&](double s) { return d1(f, s); };
  auto h = [&](double s) { return d1(g, s); };
  return d1(h, 0.0);
}

}  // namespace

TEST_CASE("conformally expanding family: closed-form coefficients") {
  const double gamma = 0.3;
  const CoefficientSet c = eval_coefficients(gamma_family(gamma), 0.2, -0.4);
  CHECK(c.h == 0.0);
  CHECK(c.h1 == doctest::Approx(4.0 * gamma).epsilon(1e-14));
  CHECK(c.h2 == 0.0);
  CHECK(c.h3 == doctest::Approx(-24.0 * gamma * gamma).epsilon(1e-13));
  CHECK(c.k1.norm() == 0.0);
  CHECK((c.k2 + 2.0 * gamma * Mat2::Identity()).norm() < 1e-14);
  CHECK(c.d == doctest::Approx(1.0));
  CHECK(c.d1 == doctest::Approx(0.0).scale(1));
  CHECK(c.d2 == doctest::Approx(2.0 * gamma).epsilon(1e-14));
  CHECK(c.q == doctest::Approx(2.0 * gamma).epsilon(1e-14));
}

TEST_CASE("localized shear family: curvature trace and inverse-metric rate") {
  const double b = 0.2, e = 0.45;
  const RadialBump chi{0.0, 0.0, 0.5};
  const CoefficientSet c = eval_coefficients(shear_family(b, e, chi), 0.0, 0.0);
  Mat2 B;
  B << b, e, e, -b;
  CHECK(c.h == doctest::Approx(0.0).scale(1));
  // tr((sB)' terms): h1 = -tr(B^2) = -2 (b^2 + e^2) at the bump center.
  CHECK(c.h1 == doctest::Approx(-2.0 * (b * b + e * e)).epsilon(1e-14));
  CHECK((c.k1 + B).norm() < 1e-14);
  // Away from the support the family is flat.
  const CoefficientSet far = eval_coefficients(shear_family(b, e, chi), 0.9, 0.9);
  CHECK(far.h1 == 0.0);
  CHECK(far.k1.norm() == 0.0);
}

TEST_CASE("cubic family: pure second-order curvature coefficient") {
  const double mu = 0.15;
  const CoefficientSet c = eval_coefficients(cubic_family(mu), -0.3, 0.6);
  CHECK(c.h1 == doctest::Approx(0.0).scale(1));
  CHECK(c.h2 == doctest::Approx(12.0 * mu).epsilon(1e-14));
  CHECK(c.h3 == doctest::Approx(0.0).scale(1));
  CHECK(c.k1.norm() == doctest::Approx(0.0).scale(1));
  CHECK(c.k2.norm() == doctest::Approx(0.0).scale(1));
  CHECK(c.d2 == doctest::Approx(0.0).scale(1));
}

TEST_CASE("general polynomial family: frozen computer-algebra values") {
  Mat2 G0, G1, G2, G3, G4;
  G0 << 2.0, 0.3, 0.3, 1.5;
  G1 << 0.4, -0.2, -0.2, 0.1;
  G2 << -0.3, 0.5, 0.5, 0.8;
  G3 << 0.7, -0.1, -0.1, 0.2;
  G4 << -0.6, 0.25, 0.25, 0.9;
  const CoefficientSet c = eval_coefficients(polynomial_family(G0, G1, G2, G3, G4), 0.0, 0.0);

  CHECK(c.h == doctest::Approx(0.3161512027491409).epsilon(1e-13));
  CHECK(c.h1 == doctest::Approx(0.19214463693154307).epsilon(1e-13));
  CHECK(c.h2 == doctest::Approx(0.8102148954327116).epsilon(1e-13));
  CHECK(c.h3 == doctest::Approx(-1.8619561923581303).epsilon(1e-12));
  CHECK(c.d == doctest::Approx(1.705872210923198).epsilon(1e-13));
  CHECK(c.d1 == doctest::Approx(0.26965677560985263).epsilon(1e-13));
  CHECK(c.d2 == doctest::Approx(0.20651325527897835).epsilon(1e-12));
  CHECK(c.d3 == doctest::Approx(0.7755193477630842).epsilon(1e-12));

  CHECK(c.k(0, 0) == doctest::Approx(50.0 / 97.0).epsilon(1e-13));
  CHECK(c.k(0, 1) == doctest::Approx(-10.0 / 97.0).epsilon(1e-13));
  CHECK(c.k(1, 1) == doctest::Approx(200.0 / 291.0).epsilon(1e-13));
  CHECK(c.k1(0, 0) == doctest::Approx(-0.12860027633117227).epsilon(1e-12));
  CHECK(c.k1(0, 1) == doctest::Approx(0.10132142983668119).epsilon(1e-12));
  CHECK(c.k1(1, 1) == doctest::Approx(-0.07982900532587003).epsilon(1e-12));
  CHECK(c.k2(0, 0) == doctest::Approx(0.20566329159878).epsilon(1e-11));
  CHECK(c.k2(0, 1) == doctest::Approx(-0.20577407729213468).epsilon(1e-11));
  CHECK(c.k2(1, 1) == doctest::Approx(-0.2533701271693959).epsilon(1e-11));
  CHECK(c.k3(0, 0) == doctest::Approx(-0.5415059980738651).epsilon(1e-11));
  CHECK(c.k3(0, 1) == doctest::Approx(0.24631728594093316).epsilon(1e-11));
  CHECK(c.k3(1, 1) == doctest::Approx(-0.1530049660024871).epsilon(1e-11));
}

TEST_CASE("property: coefficients match finite differences of the defining scalars") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> U(-0.35, 0.35);
  for (int trial = 0; trial < 20; ++trial) {
    Mat2 G0 = Mat2::Identity(), G1, G2, G3, G4;
    auto sym = [&](Mat2& M) {
      const double a = U(rng), b = U(rng), d = U(rng);
      M << a, b, b, d;
    };
    sym(G1);
    sym(G2);
    sym(G3);
    sym(G4);
    G0 += 0.2 * G1;  // non-identity but safely SPD base
    G0 = 0.5 * (G0 + G0.transpose());
    const MetricFamily fam = polynomial_family(G0, G1, G2, G3, G4);
    const CoefficientSet c = eval_coefficients(fam, 0.0, 0.0);

    auto H = [&](double s) { return (fam.g(0, 0, s).inverse() * fam.ds_g(0, 0, s)).trace(); };
    auto D = [&](double s) { return std::sqrt(fam.g(0, 0, s).determinant()); };
    const double step = 0.02;
    CHECK(c.h == doctest::Approx(H(0.0)).epsilon(1e-11));
    CHECK(c.h1 == doctest::Approx(fd_deriv(H, 1, step)).epsilon(1e-7));
    CHECK(c.h2 == doctest::Approx(fd_deriv(H, 2, step)).epsilon(1e-6).scale(1));
    CHECK(c.h3 == doctest::Approx(fd_deriv(H, 3, step)).epsilon(1e-4).scale(1));
    CHECK(c.d1 == doctest::Approx(fd_deriv(D, 1, step)).epsilon(1e-8).scale(1));
    CHECK(c.d2 == doctest::Approx(fd_deriv(D, 2, step)).epsilon(1e-6).scale(1));
    CHECK(c.d3 == doctest::Approx(fd_deriv(D, 3, step)).epsilon(1e-4).scale(1));

    // Inverse-metric derivatives against FD of the inverse, entrywise.
    for (int order = 1; order <= 3; ++order) {
      Mat2 fd;
      for (int r = 0; r < 2; ++r)
        for (int cix = 0; cix < 2; ++cix) {
          auto entry = [&](double s) { return fam.g(0, 0, s).inverse()(r, cix); };
          fd(r, cix) = fd_deriv(entry, order, step);
        }
      const Mat2 got = order == 1 ? c.k1 : (order == 2 ? c.k2 : c.k3);
      CHECK((got - fd).norm() < (order == 3 ? 1e-4 : 1e-6));
    }
  }
}
