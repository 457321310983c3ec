/**
 * @file linearize.cpp
 * @brief Stability-operator hierarchy: shared factorization, nodal source
 *        assembly for the second and third order, and the ε-difference
 *        reference routes through the nonlinear solver.
 */
#include "minsurf/linearize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>

namespace minsurf {

// ---------------------------------------------------------------------------
// Nodal coefficient arrays. The solves only need scalar fields, so the
// matrix-valued coefficients are flattened once into their three distinct
// entries (everything here is symmetric 2x2).
// ---------------------------------------------------------------------------

struct LinearizedHierarchy::Fields {
  RealField d, h1, h2, h3, dd2;      // dd2 = d2 / d
  RealField k11, k12, k22;           // inverse metric k
  RealField a11, a12, a22;           // k1
  RealField b11, b12, b22;           // k2

  Fields(const Grid2D& g, const std::vector<CoefficientSet>& coef) {
    const int n = g.size();
    for (RealField* f : {&d, &h1, &h2, &h3, &dd2, &k11, &k12, &k22, &a11, &a12,
                         &a22, &b11, &b12, &b22})
      *f = RealField::Zero(n);
    for (int i = 0; i < n; ++i) {
      const CoefficientSet& c = coef[i];
      d[i] = c.d;
      h1[i] = c.h1;
      h2[i] = c.h2;
      h3[i] = c.h3;
      dd2[i] = c.d2 / c.d;
      k11[i] = c.k(0, 0);
      k12[i] = c.k(0, 1);
      k22[i] = c.k(1, 1);
      a11[i] = c.k1(0, 0);
      a12[i] = c.k1(0, 1);
      a22[i] = c.k1(1, 1);
      b11[i] = c.k2(0, 0);
      b12[i] = c.k2(0, 1);
      b22[i] = c.k2(1, 1);
    }
  }
};

namespace {

// A(∇u, ∇v) for a symmetric nodal matrix field A = (A11, A12, A22); written
// so that swapping the two argument pairs reproduces the result bit for bit.
template <class Field>
Field contract(const RealField& A11, const RealField& A12, const RealField& A22,
               const Field& ux, const Field& uy, const Field& vx,
               const Field& vy) {
  return Field(A11 * (ux * vx) + A12 * (ux * vy + uy * vx) + A22 * (uy * vy));
}

// -d⁻¹ ∇·( d m A ∇w ) with scalar multiplier field m: the common
// divergence-form block of P^j and P^{jl}.
template <class Field>
Field div_form(const Grid2D& g, const RealField& d, const RealField& A11,
               const RealField& A12, const RealField& A22, const Field& m,
               const Field& wx, const Field& wy) {
  const Field fx(d * m * (A11 * wx + A12 * wy));
  const Field fy(d * m * (A12 * wx + A22 * wy));
  return Field(-(grad_x(g, fx) + grad_y(g, fy)) / d);
}

template <class Field>
Field apply_Pj_impl(const Grid2D& g, const LinearizedHierarchy::Fields& c,
                    const Field& vj, const Field& wx, const Field& wy) {
  return div_form(g, c.d, c.a11, c.a12, c.a22, vj, wx, wy);
}

// P^{jl} applied to t, with ∇t passed in. va, vb and wab are v^j, v^l and
// the matching pair solution w^{jl}.
template <class Field>
Field apply_Pjl_impl(const Grid2D& g, const LinearizedHierarchy::Fields& c,
                     const Field& va, const Field& ax, const Field& ay,
                     const Field& vb, const Field& bx, const Field& by,
                     const Field& wab, const Field& tx, const Field& ty) {
  // -k(∇S, ∇t) with S = d⁻¹ d2 v^j v^l.
  const Field S(c.dd2 * (va * vb));
  const Field Sx = grad_x(g, S), Sy = grad_y(g, S);
  Field out = Field(-contract(c.k11, c.k12, c.k22, Sx, Sy, tx, ty));
  // -d⁻¹ ∇·( d v^j v^l k2 ∇t )
  out += div_form(g, c.d, c.b11, c.b12, c.b22, Field(va * vb), tx, ty);
  // -d⁻¹ ∇·( d w^{jl} k1 ∇t )
  out += div_form(g, c.d, c.a11, c.a12, c.a22, wab, tx, ty);
  // +d⁻¹ ∇·( d k(∇v^j, ∇v^l) k ∇t )
  const Field sigma = contract(c.k11, c.k12, c.k22, ax, ay, bx, by);
  out -= div_form(g, c.d, c.k11, c.k12, c.k22, sigma, tx, ty);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

LinearizedHierarchy::LinearizedHierarchy(const Grid2D& grid,
                                         const MetricFamily& family)
    : grid_(grid), family_(family) {
  family_.require_minimal(grid_);  // the hierarchy only holds on a minimal leaf
  coef_ = eval_coefficients(family_, grid_);
  f_ = std::make_unique<Fields>(grid_, coef_);
  problem_ = std::make_unique<AreaProblem>(grid_, family_);
  hessian_ = problem_->hessian(RealField::Zero(grid_.size()));
  solver_ = std::make_unique<DirichletSolver>(grid_, hessian_, /*check_spd=*/true);
  weights_ = trapezoid_weights(grid_);
  boundary_ = boundary_index(grid_);
  // Midpoint coefficients for the weak-form loads, one set per cell in the
  // same row-major order the area quadrature walks.
  cell_coef_.reserve(static_cast<std::size_t>(grid_.nx - 1) * (grid_.ny - 1));
  for (int cy = 0; cy + 1 < grid_.ny; ++cy)
    for (int cx = 0; cx + 1 < grid_.nx; ++cx)
      cell_coef_.push_back(eval_coefficients(
          family_, grid_.x(cx) + 0.5 * grid_.dx(), grid_.y(cy) + 0.5 * grid_.dy()));
}

LinearizedHierarchy::~LinearizedHierarchy() = default;

template <class Field>
Field LinearizedHierarchy::rhs2_impl(const Field& vj, const Field& vk) const {
  const Field jx = grad_x(grid_, vj), jy = grad_y(grid_, vj);
  const Field kx = grad_x(grid_, vk), ky = grad_y(grid_, vk);
  Field I2 = apply_Pj_impl(grid_, *f_, vj, kx, ky);
  I2 += apply_Pj_impl(grid_, *f_, vk, jx, jy);
  I2 += contract(f_->a11, f_->a12, f_->a22, jx, jy, kx, ky);
  I2 += 0.5 * f_->h2 * (vj * vk);
  return Field(-I2);
}

template <class Field>
Field LinearizedHierarchy::rhs3_impl(const Field& vj, const Field& vk,
                                     const Field& vl, const Field& wjk,
                                     const Field& wjl, const Field& wkl) const {
  const Grid2D& g = grid_;
  const Fields& c = *f_;
  const Field jx = grad_x(g, vj), jy = grad_y(g, vj);
  const Field kx = grad_x(g, vk), ky = grad_y(g, vk);
  const Field lx = grad_x(g, vl), ly = grad_y(g, vl);

  // P^{(jl} v^{k)}
  Field I3 = apply_Pjl_impl(g, c, vj, jx, jy, vl, lx, ly, wjl, kx, ky);
  I3 += apply_Pjl_impl(g, c, vj, jx, jy, vk, kx, ky, wjk, lx, ly);
  I3 += apply_Pjl_impl(g, c, vk, kx, ky, vl, lx, ly, wkl, jx, jy);

  // P^{(j} w^{kl)}
  const Field pjx = grad_x(g, wkl), pjy = grad_y(g, wkl);
  const Field pkx = grad_x(g, wjl), pky = grad_y(g, wjl);
  const Field plx = grad_x(g, wjk), ply = grad_y(g, wjk);
  I3 += apply_Pj_impl(g, c, vj, pjx, pjy);
  I3 += apply_Pj_impl(g, c, vk, pkx, pky);
  I3 += apply_Pj_impl(g, c, vl, plx, ply);

  // k2(∇v^{(j}, ∇v^k) v^{l)}
  I3 += contract(c.b11, c.b12, c.b22, jx, jy, kx, ky) * vl;
  I3 += contract(c.b11, c.b12, c.b22, jx, jy, lx, ly) * vk;
  I3 += contract(c.b11, c.b12, c.b22, kx, ky, lx, ly) * vj;

  // k1(∇v^{(j}, ∇w^{kl)})
  I3 += contract(c.a11, c.a12, c.a22, jx, jy, pjx, pjy);
  I3 += contract(c.a11, c.a12, c.a22, kx, ky, pkx, pky);
  I3 += contract(c.a11, c.a12, c.a22, lx, ly, plx, ply);

  // ½ h1 k(∇v^{(j}, ∇v^k) v^{l)}
  Field grads = contract(c.k11, c.k12, c.k22, jx, jy, kx, ky) * vl;
  grads += contract(c.k11, c.k12, c.k22, jx, jy, lx, ly) * vk;
  grads += contract(c.k11, c.k12, c.k22, kx, ky, lx, ly) * vj;
  I3 += 0.5 * c.h1 * grads;

  // ½ h2 w^{(jk} v^{l)}  +  ½ h3 v^j v^k v^l
  I3 += 0.5 * c.h2 * (wjk * vl + wjl * vk + wkl * vj);
  I3 += 0.5 * c.h3 * (vj * (vk * vl));
  return Field(-I3);
}

// ---------------------------------------------------------------------------
// Weak-form loads. The area functional is quadratured per cell from the
// corner average s̄(u) and the mean gradient p̄(u); assembling the sources
// against the same rule (coefficients at the cell midpoint, test functions
// the nodal hats with s̄ = 1/4 and p̄ = (±1/2dx, ±1/2dy) per corner)
// integrates every divergence block by parts, so no coefficient derivative
// enters. On a minimal leaf d·k1 and d·h2/2 are exactly the mixed Taylor
// coefficients ∂_s∂²_p and ∂³_s of the quadratured cell integrand, so the
// second-order load reproduces the third directional derivative of the
// discrete area and the solve matches the ε-differenced nonlinear solver
// to stencil noise instead of O(h²).
// ---------------------------------------------------------------------------

namespace {

// A(u, v) for a constant symmetric 2x2 matrix and 2-vectors of scalar type
// S; commutative in the two vector slots bit for bit.
template <class S>
S mat_pair(const Mat2& A, S ux, S uy, S vx, S vy) {
  return A(0, 0) * (ux * vx) + A(0, 1) * (ux * vy + uy * vx) + A(1, 1) * (uy * vy);
}

template <class S>
std::array<S, 2> mat_vec(const Mat2& A, S px, S py) {
  return {A(0, 0) * px + A(0, 1) * py, A(0, 1) * px + A(1, 1) * py};
}

}  // namespace

template <class Field>
Field LinearizedHierarchy::weak_rhs2(const Field& vj, const Field& vk) const {
  using S = typename Field::Scalar;
  const Grid2D& g = grid_;
  Field load = Field::Zero(g.size());
  const double ix = 1.0 / (2.0 * g.dx()), iy = 1.0 / (2.0 * g.dy());
  const double wc = g.dx() * g.dy();
  for (int cy = 0; cy + 1 < g.ny; ++cy)
    for (int cx = 0; cx + 1 < g.nx; ++cx) {
      const CoefficientSet& cf = cell_coef_[cy * (g.nx - 1) + cx];
      const int n[4] = {g.id(cx, cy), g.id(cx + 1, cy), g.id(cx, cy + 1),
                        g.id(cx + 1, cy + 1)};
      auto avg = [&](const Field& u) {
        return S(0.25 * (u[n[0]] + u[n[1]] + u[n[2]] + u[n[3]]));
      };
      auto gx = [&](const Field& u) {
        return S(ix * ((u[n[1]] + u[n[3]]) - (u[n[0]] + u[n[2]])));
      };
      auto gy = [&](const Field& u) {
        return S(iy * ((u[n[2]] + u[n[3]]) - (u[n[0]] + u[n[1]])));
      };
      const S sj = avg(vj), sk = avg(vk);
      const S jx = gx(vj), jy = gy(vj);
      const S kx = gx(vk), ky = gy(vk);
      // φ̄-weighted block: k1(∇v^j, ∇v^k) + ½ h2 v^j v^k.
      const S bulk =
          0.25 * (mat_pair(cf.k1, jx, jy, kx, ky) + (0.5 * cf.h2) * (sj * sk));
      // ∇φ-weighted vector from P^{(j} v^{k)} integrated by parts:
      // v^j k1 ∇v^k + v^k k1 ∇v^j.
      const std::array<S, 2> qk = mat_vec(cf.k1, kx, ky);
      const std::array<S, 2> qj = mat_vec(cf.k1, jx, jy);
      const S fx = sj * qk[0] + sk * qj[0];
      const S fy = sj * qk[1] + sk * qj[1];
      for (int r = 0; r < 4; ++r) {
        const double tx = (r == 1 || r == 3) ? ix : -ix;
        const double ty = (r == 2 || r == 3) ? iy : -iy;
        load[n[r]] -= wc * cf.d * (bulk + fx * tx + fy * ty);
      }
    }
  return load;
}

template <class Field>
Field LinearizedHierarchy::weak_rhs3(const Field& vj, const Field& vk,
                                     const Field& vl, const Field& wjk,
                                     const Field& wjl, const Field& wkl) const {
  using S = typename Field::Scalar;
  const Grid2D& g = grid_;
  // Auxiliary nodal products S_ab = d⁻¹d2 v^a v^b; the -k(∇S_ab, ∇v^c)
  // block only needs their cell mean gradients.
  const Field Sjk(f_->dd2 * (vj * vk));
  const Field Sjl(f_->dd2 * (vj * vl));
  const Field Skl(f_->dd2 * (vk * vl));
  // The three splittings of {j,k,l} into a pair (a,b) and a single c; the
  // pair carries w^{ab} and S_ab.
  const std::array<const Field*, 3> va{{&vj, &vj, &vk}}, vb{{&vk, &vl, &vl}},
      vc{{&vl, &vk, &vj}}, wab{{&wjk, &wjl, &wkl}}, sab{{&Sjk, &Sjl, &Skl}};

  Field load = Field::Zero(g.size());
  const double ix = 1.0 / (2.0 * g.dx()), iy = 1.0 / (2.0 * g.dy());
  const double wc = g.dx() * g.dy();
  struct Val {
    S s, px, py;
  };
  for (int cy = 0; cy + 1 < g.ny; ++cy)
    for (int cx = 0; cx + 1 < g.nx; ++cx) {
      const CoefficientSet& cf = cell_coef_[cy * (g.nx - 1) + cx];
      const int n[4] = {g.id(cx, cy), g.id(cx + 1, cy), g.id(cx, cy + 1),
                        g.id(cx + 1, cy + 1)};
      auto read = [&](const Field& u) {
        return Val{S(0.25 * (u[n[0]] + u[n[1]] + u[n[2]] + u[n[3]])),
                   S(ix * ((u[n[1]] + u[n[3]]) - (u[n[0]] + u[n[2]]))),
                   S(iy * ((u[n[2]] + u[n[3]]) - (u[n[0]] + u[n[1]])))};
      };
      S bulk = S(0), fx = S(0), fy = S(0);
      for (int p = 0; p < 3; ++p) {
        const Val a = read(*va[p]), b = read(*vb[p]), c = read(*vc[p]);
        const Val w = read(*wab[p]), sg = read(*sab[p]);
        const S kab = mat_pair(cf.k, a.px, a.py, b.px, b.py);
        // φ̄ block: -k(∇S_ab, ∇v^c) from P^{ab}, then k2(∇v^a,∇v^b)v^c,
        // k1(∇v^c, ∇w^{ab}), ½h1 k(∇v^a,∇v^b)v^c, ½h2 w^{ab}v^c.
        bulk += -mat_pair(cf.k, sg.px, sg.py, c.px, c.py) +
                mat_pair(cf.k2, a.px, a.py, b.px, b.py) * c.s +
                mat_pair(cf.k1, c.px, c.py, w.px, w.py) +
                (0.5 * cf.h1) * kab * c.s + (0.5 * cf.h2) * (w.s * c.s);
        // ∇φ block, integrated by parts: the three divergence terms of
        // P^{ab}v^c (note the k(∇v^a,∇v^b) k ∇v^c one flips sign twice)
        // and P^c w^{ab}.
        const std::array<S, 2> q2 = mat_vec(cf.k2, c.px, c.py);
        const std::array<S, 2> q1 = mat_vec(cf.k1, c.px, c.py);
        const std::array<S, 2> qk = mat_vec(cf.k, c.px, c.py);
        const std::array<S, 2> qw = mat_vec(cf.k1, w.px, w.py);
        fx += (a.s * b.s) * q2[0] + w.s * q1[0] - kab * qk[0] + c.s * qw[0];
        fy += (a.s * b.s) * q2[1] + w.s * q1[1] - kab * qk[1] + c.s * qw[1];
      }
      const Val tj = read(vj), tk = read(vk), tl = read(vl);
      bulk += (0.5 * cf.h3) * (tj.s * (tk.s * tl.s));
      for (int r = 0; r < 4; ++r) {
        const double tx = (r == 1 || r == 3) ? ix : -ix;
        const double ty = (r == 2 || r == 3) ? iy : -iy;
        load[n[r]] -= wc * cf.d * (0.25 * bulk + fx * tx + fy * ty);
      }
    }
  return load;
}

template <class Field>
Field LinearizedHierarchy::solve_load(const Field& load) const {
  const Field zero = Field::Zero(grid_.size());
  return solver_->solve(load, zero);
}

RealField LinearizedHierarchy::solve_first(const RealField& f) const {
  return solver_->solve(RealField::Zero(grid_.size()), f);
}
ComplexField LinearizedHierarchy::solve_first(const ComplexField& f) const {
  return solver_->solve(ComplexField::Zero(grid_.size()), f);
}

RealField LinearizedHierarchy::second_rhs(const RealField& vj,
                                          const RealField& vk) const {
  return rhs2_impl(vj, vk);
}
ComplexField LinearizedHierarchy::second_rhs(const ComplexField& vj,
                                             const ComplexField& vk) const {
  return rhs2_impl(vj, vk);
}

RealField LinearizedHierarchy::solve_second(const RealField& vj,
                                            const RealField& vk) const {
  return solve_load(weak_rhs2(vj, vk));
}
ComplexField LinearizedHierarchy::solve_second(const ComplexField& vj,
                                               const ComplexField& vk) const {
  return solve_load(weak_rhs2(vj, vk));
}

RealField LinearizedHierarchy::third_rhs(const RealField& vj, const RealField& vk,
                                         const RealField& vl, const RealField& wjk,
                                         const RealField& wjl,
                                         const RealField& wkl) const {
  return rhs3_impl(vj, vk, vl, wjk, wjl, wkl);
}
ComplexField LinearizedHierarchy::third_rhs(const ComplexField& vj,
                                            const ComplexField& vk,
                                            const ComplexField& vl,
                                            const ComplexField& wjk,
                                            const ComplexField& wjl,
                                            const ComplexField& wkl) const {
  return rhs3_impl(vj, vk, vl, wjk, wjl, wkl);
}

RealField LinearizedHierarchy::solve_third(const RealField& vj, const RealField& vk,
                                           const RealField& vl, const RealField& wjk,
                                           const RealField& wjl,
                                           const RealField& wkl) const {
  return solve_load(weak_rhs3(vj, vk, vl, wjk, wjl, wkl));
}
ComplexField LinearizedHierarchy::solve_third(const ComplexField& vj,
                                              const ComplexField& vk,
                                              const ComplexField& vl,
                                              const ComplexField& wjk,
                                              const ComplexField& wjl,
                                              const ComplexField& wkl) const {
  return solve_load(weak_rhs3(vj, vk, vl, wjk, wjl, wkl));
}

template <class Field>
Field LinearizedHierarchy::conormal_impl(const Field& w) const {
  const Field gx = grad_x(grid_, w), gy = grad_y(grid_, w);
  Field out = Field::Zero(boundary_.size());
  for (int b = 0; b < boundary_.size(); ++b) {
    const int id = boundary_.node[b];
    const Mat2& k = coef_[id].k;
    const double nx = boundary_.normal[b][0], ny = boundary_.normal[b][1];
    const double knx = k(0, 0) * nx + k(0, 1) * ny;  // (k ν)_x
    const double kny = k(0, 1) * nx + k(1, 1) * ny;
    const double norm = std::sqrt(nx * knx + ny * kny);
    out[b] = (knx * gx[id] + kny * gy[id]) / norm;
  }
  return out;
}

RealField LinearizedHierarchy::conormal_derivative(const RealField& w) const {
  return conormal_impl(w);
}
ComplexField LinearizedHierarchy::conormal_derivative(const ComplexField& w) const {
  return conormal_impl(w);
}

RealField LinearizedHierarchy::operator_residual(const RealField& w,
                                                 const RealField& rhs) const {
  const Eigen::VectorXd Hw = hessian_ * w.matrix();
  RealField res = RealField::Zero(grid_.size());
  for (int j = 1; j < grid_.ny - 1; ++j)
    for (int i = 1; i < grid_.nx - 1; ++i) {
      const int id = grid_.id(i, j);
      res[id] = Hw[id] / (weights_[id] * f_->d[id]) - rhs[id];
    }
  return res;
}

std::vector<LinearizedSystem> LinearizedHierarchy::solve_hierarchy(
    const std::vector<RealField>& fs, int max_order) const {
  if (max_order < 1 || max_order > 3)
    throw ConfigInvalid("solve_hierarchy: order must be 1, 2 or 3");
  const int m = static_cast<int>(fs.size());
  const RealField zero = RealField::Zero(grid_.size());

  std::vector<LinearizedSystem> out;
  std::vector<RealField> v(m);
  for (int j = 0; j < m; ++j) {
    v[j] = solve_first(fs[j]);
    out.push_back({1, {j, -1, -1}, zero, v[j]});
  }
  if (max_order < 2) return out;

  std::vector<std::vector<RealField>> w(m, std::vector<RealField>(m));
  for (int j = 0; j < m; ++j)
    for (int k = j; k < m; ++k) {
      LinearizedSystem sys;
      sys.order = 2;
      sys.indices = {j, k, -1};
      sys.rhs = second_rhs(v[j], v[k]);
      sys.solution = solve_second(v[j], v[k]);
      w[j][k] = w[k][j] = sys.solution;
      out.push_back(std::move(sys));
    }
  if (max_order < 3) return out;

  for (int j = 0; j < m; ++j)
    for (int k = j; k < m; ++k)
      for (int l = k; l < m; ++l) {
        LinearizedSystem sys;
        sys.order = 3;
        sys.indices = {j, k, l};
        sys.rhs = third_rhs(v[j], v[k], v[l], w[j][k], w[j][l], w[k][l]);
        sys.solution = solve_third(v[j], v[k], v[l], w[j][k], w[j][l], w[k][l]);
        out.push_back(std::move(sys));
      }
  return out;
}

// ---------------------------------------------------------------------------
// Free functions
// ---------------------------------------------------------------------------

RealField apply_Pj(const Grid2D& grid, const std::vector<CoefficientSet>& coef,
                   const RealField& vj, const RealField& w) {
  const LinearizedHierarchy::Fields c(grid, coef);
  const RealField wx = grad_x(grid, w), wy = grad_y(grid, w);
  return apply_Pj_impl(grid, c, vj, wx, wy);
}

namespace {

// All sign combinations s ∈ {±1}^order of the central mixed-difference
// stencil: data Σ_a s_a eps fs[a], weight Π_a s_a / (2 eps)^order.
struct StencilPoint {
  RealField data;
  double weight;
};

std::vector<StencilPoint> mixed_stencil(const Grid2D& grid,
                                        const std::vector<RealField>& fs,
                                        double eps) {
  const int order = static_cast<int>(fs.size());
  const double scale = 1.0 / std::pow(2.0 * eps, order);
  std::vector<StencilPoint> out;
  for (int mask = 0; mask < (1 << order); ++mask) {
    RealField data = RealField::Zero(grid.size());
    double sgn = 1.0;
    for (int a = 0; a < order; ++a) {
      const double s = (mask >> a) & 1 ? 1.0 : -1.0;
      data += s * eps * fs[a];
      sgn *= s;
    }
    out.push_back({std::move(data), sgn * scale});
  }
  return out;
}

// Run one nonlinear solve per stencil point (optionally across threads) and
// form the weighted combination. `flux` maps each solution through dn_map.
RealField fd_combine(const AreaProblem& prob, const std::vector<StencilPoint>& pts,
                     const NewtonOptions& opt, int threads, bool flux) {
  const int n = static_cast<int>(pts.size());
  std::vector<RealField> vals(n);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        const ForwardSolution sol = solve_forward(prob, pts[i].data, opt);
        vals[i] = flux ? dn_map(prob, sol) : sol.u;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int np = std::min(threads, n);
    pool.reserve(np);
    for (int t = 0; t < np; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  RealField acc = pts[0].weight * vals[0];
  for (int i = 1; i < n; ++i) acc += pts[i].weight * vals[i];
  return acc;
}

RealField fd_route(const Grid2D& grid, const MetricFamily& family, int order,
                   const std::vector<RealField>& fs, double eps,
                   const NewtonOptions& opt, int threads, bool richardson,
                   bool flux) {
  if (order < 1 || order > 3)
    throw ConfigInvalid("fd route: order must be 1, 2 or 3");
  if (static_cast<int>(fs.size()) != order)
    throw ConfigInvalid("fd route: need one boundary field per order slot");
  if (eps == 0.0) eps = order == 3 ? 3e-2 : 1e-2;
  if (eps < 0.0) throw ConfigInvalid("fd route: eps must be positive");

  const AreaProblem prob(grid, family);
  const RealField coarse =
      fd_combine(prob, mixed_stencil(grid, fs, eps), opt, threads, flux);
  if (!richardson) return coarse;
  const RealField fine =
      fd_combine(prob, mixed_stencil(grid, fs, eps / 2), opt, threads, flux);
  return (4.0 * fine - coarse) / 3.0;
}

}  // namespace

RealField fd_linearize(const Grid2D& grid, const MetricFamily& family, int order,
                       const std::vector<RealField>& fs, double eps,
                       const NewtonOptions& opt, int threads, bool richardson) {
  return fd_route(grid, family, order, fs, eps, opt, threads, richardson, false);
}

RealField fd_dn_derivative(const Grid2D& grid, const MetricFamily& family,
                           int order, const std::vector<RealField>& fs, double eps,
                           const NewtonOptions& opt, int threads, bool richardson) {
  return fd_route(grid, family, order, fs, eps, opt, threads, richardson, true);
}

RealField dn_derivative(const LinearizedHierarchy& sys, int order,
                        const std::vector<RealField>& fs) {
  if (order < 1 || order > 3)
    throw ConfigInvalid("dn_derivative: order must be 1, 2 or 3");
  if (static_cast<int>(fs.size()) != order)
    throw ConfigInvalid("dn_derivative: need one boundary field per order slot");

  const RealField v1 = sys.solve_first(fs[0]);
  if (order == 1) return sys.conormal_derivative(v1);

  const RealField v2 = sys.solve_first(fs[1]);
  if (order == 2) return sys.conormal_derivative(sys.solve_second(v1, v2));

  const RealField v3 = sys.solve_first(fs[2]);
  const RealField w12 = sys.solve_second(v1, v2);
  const RealField w13 = sys.solve_second(v1, v3);
  const RealField w23 = sys.solve_second(v2, v3);
  RealField out =
      sys.conormal_derivative(sys.solve_third(v1, v2, v3, w12, w13, w23));

  // Cubic correction of the flux normalization 1/√(1 + k(∇u, ∇u)):
  //   -Σ_sym ∂_ν v^{(1} k(∇v^2, ∇v^{3)})  on the boundary walk.
  const Grid2D& g = sys.grid();
  const std::array<const RealField*, 3> v{&v1, &v2, &v3};
  std::array<RealField, 3> gx, gy, cn;
  for (int a = 0; a < 3; ++a) {
    gx[a] = grad_x(g, *v[a]);
    gy[a] = grad_y(g, *v[a]);
    cn[a] = sys.conormal_derivative(*v[a]);
  }
  const BoundaryIndex bi = boundary_index(g);
  for (int b = 0; b < bi.size(); ++b) {
    const int id = bi.node[b];
    const Mat2& k = sys.coefficients()[id].k;
    auto pair = [&](int a, int bb) {
      return k(0, 0) * gx[a][id] * gx[bb][id] +
             k(0, 1) * (gx[a][id] * gy[bb][id] + gy[a][id] * gx[bb][id]) +
             k(1, 1) * gy[a][id] * gy[bb][id];
    };
    out[b] -= cn[0][b] * pair(1, 2) + cn[1][b] * pair(0, 2) +
              cn[2][b] * pair(0, 1);
  }
  return out;
}

}  // namespace minsurf
