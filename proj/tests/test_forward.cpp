/**
 * @file  test_forward.cpp
 * @brief Nonlinear graph solver: exactness on trivial data, convergence
 *        against a closed-form minimal graph, variational consistency of
 *        gradient/Hessian, boundary-flux agreement, failure modes.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "minsurf/forward.hpp"

using namespace minsurf;

namespace {

// Closed-form minimal graph over the flat product metric:
//   u(x, y) = (1/k) log(cos(k x) / cos(k y)),
// a solution of div(∇u / sqrt(1 + |∇u|^2)) = 0 for any k (the doubly
// periodic saddle family), smooth on [-1,1]^2 while k < pi/2.
struct SaddleGraph {
  double k = 0.7;
  double operator()(double x, double y) const {
    return (std::log(std::cos(k * x)) - std::log(std::cos(k * y))) / k;
  }
};

RealField boundary_only(const Grid2D& g, const RealField& full) {
  RealField f = RealField::Zero(g.size());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (g.on_boundary(i, j)) f[g.id(i, j)] = full[g.id(i, j)];
  return f;
}

}  // namespace

TEST_CASE("zero boundary data on a minimal family returns the zero graph exactly") {
  const Grid2D g = Grid2D::square(1.0, 33);
  for (const MetricFamily& fam : {flat_family(), gamma_family(0.4),
                                  shear_family(0.25, -0.3, RadialBump{0, 0, 0.6})}) {
    const AreaProblem prob(g, fam);
    const ForwardSolution sol = solve_forward(prob, RealField::Zero(g.size()));
    CHECK(sol.newton_iters == 0);
    CHECK(sol.u.abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("affine data over the flat metric is reproduced to machine precision") {
  const Grid2D g = Grid2D::square(1.0, 33);
  const AreaProblem prob(g, flat_family());
  const RealField exact = sample(g, [](double x, double y) { return 0.3 - 0.7 * x + 0.45 * y; });
  const ForwardSolution sol = solve_forward(prob, boundary_only(g, exact));
  CHECK((sol.u - exact).abs().maxCoeff() < 1e-12);
  // The area of an affine graph is sqrt(1+|b|^2+|c|^2) * |domain|.
  const double b = -0.7, c = 0.45;
  CHECK(sol.area == doctest::Approx(std::sqrt(1 + b * b + c * c) * 4.0).epsilon(1e-12));
}

TEST_CASE("second-order convergence to the closed-form saddle graph") {
  const SaddleGraph exact{0.7};
  std::vector<double> hs, errs;
  for (int n : {33, 65, 129}) {
    const Grid2D g = Grid2D::square(1.0, n);
    const AreaProblem prob(g, flat_family());
    const RealField ex = sample(g, exact);
    const ForwardSolution sol = solve_forward(prob, boundary_only(g, ex));
    hs.push_back(g.dx());
    errs.push_back(rel_l2_error(g, sol.u, ex));
  }
  CHECK(errs.back() < 2e-4);
  CHECK(fit_log_slope(hs, errs) > 1.9);
}

TEST_CASE("analytic gradient and Hessian match finite differences of the area") {
  const Grid2D g = Grid2D::square(1.0, 17);
  const AreaProblem prob(g, gamma_family(0.5));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(0.0, 0.15);
  RealField u(g.size()), dir(g.size());
  for (int k = 0; k < g.size(); ++k) {
    u[k] = N(rng);
    dir[k] = N(rng);
  }
  const double t = 1e-5;
  // Directional derivative of the area.
  const double fd1 = (prob.area(u + t * dir) - prob.area(u - t * dir)) / (2 * t);
  CHECK(prob.first_variation(u, dir) == doctest::Approx(fd1).epsilon(1e-8));
  // Directional derivative of the gradient = Hessian action.
  const RealField fd2 = (prob.gradient(u + t * dir) - prob.gradient(u - t * dir)) / (2 * t);
  const Eigen::VectorXd Hd = prob.hessian(u) * dir.matrix();
  double worst = 0.0;
  for (int k = 0; k < g.size(); ++k) worst = std::max(worst, std::abs(Hd[k] - fd2[k]));
  CHECK(worst < 1e-8 * (1.0 + fd2.abs().maxCoeff()));
}

TEST_CASE("Hessian at the zero graph realizes the stability operator") {
  const Grid2D g = Grid2D::square(1.0, 41);
  // Flat: (H v)_i / (W_i) must equal the positive Laplacian exactly on
  // quadratics: v = x^2 + y^2 -> -div grad v = -4.
  {
    const AreaProblem prob(g, flat_family());
    const SparseMat H = prob.hessian(RealField::Zero(g.size()));
    const RealField v = sample(g, [](double x, double y) { return x * x + y * y; });
    const Eigen::VectorXd Hv = H * v.matrix();
    const RealField w = trapezoid_weights(g);
    for (int j = 1; j < g.ny - 1; ++j)
      for (int i = 1; i < g.nx - 1; ++i) {
        const int id = g.id(i, j);
        CHECK(Hv[id] / w[id] == doctest::Approx(-4.0).epsilon(1e-11));
      }
  }
  // Conformally expanding family: operator is -lap + q with q = 2 gamma.
  {
    const double gamma = 0.35;
    const AreaProblem prob(g, gamma_family(gamma));
    const SparseMat H = prob.hessian(RealField::Zero(g.size()));
    const RealField v =
        sample(g, [](double x, double y) { return std::sin(1.3 * x) * std::cos(0.8 * y); });
    const RealField lv = sample(g, [gamma](double x, double y) {
      const double vv = std::sin(1.3 * x) * std::cos(0.8 * y);
      return (1.3 * 1.3 + 0.8 * 0.8) * vv + 2.0 * gamma * vv;  // -lap v + q v
    });
    const Eigen::VectorXd Hv = H * v.matrix();
    const RealField w = trapezoid_weights(g);
    double worst = 0.0;
    for (int j = 2; j < g.ny - 2; ++j)
      for (int i = 2; i < g.nx - 2; ++i) {
        const int id = g.id(i, j);
        worst = std::max(worst, std::abs(Hv[id] / w[id] - lv[id]));
      }
    CHECK(worst < 5e-3);  // O(h^2) at h = 1/20
  }
}

TEST_CASE("the two boundary-flux routes agree") {
  const SaddleGraph exact{0.7};
  const Grid2D g = Grid2D::square(1.0, 65);
  const AreaProblem prob(g, flat_family());
  const ForwardSolution sol = solve_forward(prob, boundary_only(g, sample(g, exact)));
  const RealField a = dn_map(prob, sol);
  const RealField b = dn_from_areas(prob, sol);
  const BoundaryIndex bi = boundary_index(g);
  double num = 0.0, den = 0.0;
  for (int k = 0; k < bi.size(); ++k) {
    if (bi.corner[k]) continue;  // corner conormal is convention-dependent
    num += bi.weight[k] * (a[k] - b[k]) * (a[k] - b[k]);
    den += bi.weight[k] * b[k] * b[k];
  }
  CHECK(std::sqrt(num / den) < 5e-3);
}

TEST_CASE("boundary flux of an affine graph is exact") {
  const Grid2D g = Grid2D::square(1.0, 21);
  const AreaProblem prob(g, flat_family());
  const double bx = 0.4, cy = -0.25;
  const RealField exact = sample(g, [=](double x, double y) { return bx * x + cy * y; });
  const ForwardSolution sol = solve_forward(prob, boundary_only(g, exact));
  const RealField dn = dn_map(prob, sol);
  const BoundaryIndex bi = boundary_index(g);
  const double norm = std::sqrt(1.0 + bx * bx + cy * cy);
  for (int k = 0; k < bi.size(); ++k) {
    if (bi.corner[k]) continue;
    const double expect = (bi.normal[k][0] * bx + bi.normal[k][1] * cy) / norm;
    CHECK(dn[k] == doctest::Approx(expect).epsilon(1e-11).scale(1));
  }
}

TEST_CASE("failure taxonomy: NotSPD, NewtonDiverged, EigenvalueObstruction") {
  const Grid2D g = Grid2D::square(1.0, 17);
  // Metric turns indefinite above s = 1/2.
  Mat2 Z = Mat2::Zero();
  const MetricFamily narrowing =
      polynomial_family(Mat2::Identity(), -2.0 * Mat2::Identity(), Z, Z, Z);
  const AreaProblem prob(g, narrowing);
  CHECK_THROWS_AS(prob.area(RealField::Constant(g.size(), 0.6)), NotSPD);

  // Impossible iteration budget.
  const AreaProblem flatp(g, flat_family());
  const RealField f = sample(g, [](double x, double y) { return x * y; });
  NewtonOptions opt;
  opt.max_iter = 0;
  CHECK_THROWS_AS(solve_forward(flatp, f, opt), NewtonDiverged);

  // A deep negative stability well makes the linearized operator indefinite.
  const MetricFamily unstable = shear_family(4.0, 0.0, RadialBump{0, 0, 0.85});
  const AreaProblem uprob(g, unstable);
  const SparseMat H = uprob.hessian(RealField::Zero(g.size()));
  CHECK_THROWS_AS(DirichletSolver(g, H, true), EigenvalueObstruction);
}
