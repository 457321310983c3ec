#include "minsurf/forward.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

namespace minsurf {

// ---------------------------------------------------------------------------
// Per-cell integrand derivatives.
//
// Cell variables: s = corner average of u, p = bilinear-average gradient.
// F(x_c, y_c, s, p) = d(s) sqrt(Q),  Q = 1 + p^T k(s) p,  k = g^{-1},
// with g and its s-derivatives supplied by the family at the cell center.
// Derivative bookkeeping used below (primes are d/ds):
//   d'  = d tr(k g') / 2
//   d'' = d ( tr(k g')^2 / 4 + (tr(k g'))' / 2 )
//   k'  = -k g' k
//   k'' = -(k' g' k + k g'' k + k g' k')
// ---------------------------------------------------------------------------
struct AreaProblem::CellEval {
  double F = 0;
  double Fs = 0, Fpx = 0, Fpy = 0;
  double Fss = 0, Fspx = 0, Fspy = 0, Fxx = 0, Fxy = 0, Fyy = 0;
  double s = 0, px = 0, py = 0;
};

AreaProblem::AreaProblem(const Grid2D& grid, MetricFamily fam)
    : grid_(grid), fam_(std::move(fam)), weights_(trapezoid_weights(grid)) {
  fam_.validate_spd(grid_, 0.0);
}

AreaProblem::CellEval AreaProblem::cell_eval(int ci, int cj, const RealField& u,
                                             int order) const {
  const int n00 = grid_.id(ci, cj), n10 = n00 + 1;
  const int n01 = n00 + grid_.nx, n11 = n01 + 1;
  const double dx = grid_.dx(), dy = grid_.dy();
  const double xc = grid_.x0 + (ci + 0.5) * dx, yc = grid_.y0 + (cj + 0.5) * dy;

  CellEval e;
  e.s = 0.25 * (u[n00] + u[n10] + u[n01] + u[n11]);
  e.px = ((u[n10] + u[n11]) - (u[n00] + u[n01])) / (2.0 * dx);
  e.py = ((u[n01] + u[n11]) - (u[n00] + u[n10])) / (2.0 * dy);

  const Mat2 g = fam_.g(xc, yc, e.s);
  const double detg = g.determinant();
  if (!(g(0, 0) > 0.0) || !(detg > 0.0)) {
    std::ostringstream os;
    os << "metric not SPD at cell center (" << xc << ", " << yc << "), height " << e.s;
    throw NotSPD(os.str());
  }
  const Mat2 k = g.inverse();
  const Eigen::Vector2d p(e.px, e.py);
  const Eigen::Vector2d kp = k * p;
  const double Q = 1.0 + p.dot(kp);
  const double sq = std::sqrt(Q);
  const double d = std::sqrt(detg);
  e.F = d * sq;
  if (order < 1) return e;

  const Mat2 gp = fam_.ds_g(xc, yc, e.s);
  const double H = (k * gp).trace();
  const double dprime = 0.5 * d * H;
  const Mat2 Kp = -(k * gp * k);
  const double Qs = p.dot(Kp * p);
  e.Fs = dprime * sq + d * Qs / (2.0 * sq);
  e.Fpx = d * kp[0] / sq;
  e.Fpy = d * kp[1] / sq;
  if (order < 2) return e;

  const Mat2 gpp = fam_.ds2_g(xc, yc, e.s);
  const double Hp = (Kp * gp + k * gpp).trace();
  const double dsecond = d * (0.25 * H * H + 0.5 * Hp);
  const Mat2 Kpp = -(Kp * gp * k + k * gpp * k + k * gp * Kp);
  const double Qss = p.dot(Kpp * p);
  e.Fss = dsecond * sq + dprime * Qs / sq + d * (Qss / (2.0 * sq) - Qs * Qs / (4.0 * Q * sq));
  const Eigen::Vector2d Fsp =
      dprime * kp / sq + d * (Kp * p) / sq - d * kp * Qs / (2.0 * Q * sq);
  e.Fspx = Fsp[0];
  e.Fspy = Fsp[1];
  const Mat2 Fpp = d * (k / sq - (kp * kp.transpose()) / (Q * sq));
  e.Fxx = Fpp(0, 0);
  e.Fxy = Fpp(0, 1);
  e.Fyy = Fpp(1, 1);
  return e;
}

double AreaProblem::area(const RealField& u) const {
  const double wc = grid_.dx() * grid_.dy();
  double acc = 0.0;
  for (int cj = 0; cj < grid_.ny - 1; ++cj)
    for (int ci = 0; ci < grid_.nx - 1; ++ci) acc += cell_eval(ci, cj, u, 0).F;
  return wc * acc;
}

RealField AreaProblem::gradient(const RealField& u) const {
  RealField g = RealField::Zero(grid_.size());
  const double wc = grid_.dx() * grid_.dy();
  const double ax = 1.0 / (2.0 * grid_.dx()), ay = 1.0 / (2.0 * grid_.dy());
  for (int cj = 0; cj < grid_.ny - 1; ++cj)
    for (int ci = 0; ci < grid_.nx - 1; ++ci) {
      const CellEval e = cell_eval(ci, cj, u, 1);
      const int n00 = grid_.id(ci, cj), n10 = n00 + 1;
      const int n01 = n00 + grid_.nx, n11 = n01 + 1;
      const double qs = 0.25 * e.Fs;
      g[n00] += wc * (qs - ax * e.Fpx - ay * e.Fpy);
      g[n10] += wc * (qs + ax * e.Fpx - ay * e.Fpy);
      g[n01] += wc * (qs - ax * e.Fpx + ay * e.Fpy);
      g[n11] += wc * (qs + ax * e.Fpx + ay * e.Fpy);
    }
  return g;
}

SparseMat AreaProblem::hessian(const RealField& u) const {
  const double wc = grid_.dx() * grid_.dy();
  const double ax = 1.0 / (2.0 * grid_.dx()), ay = 1.0 / (2.0 * grid_.dy());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(grid_.nx - 1) * (grid_.ny - 1) * 16);
  for (int cj = 0; cj < grid_.ny - 1; ++cj)
    for (int ci = 0; ci < grid_.nx - 1; ++ci) {
      const CellEval e = cell_eval(ci, cj, u, 2);
      const int n00 = grid_.id(ci, cj), n10 = n00 + 1;
      const int n01 = n00 + grid_.nx, n11 = n01 + 1;
      const int ids[4] = {n00, n10, n01, n11};
      // Rows of the (s, px, py) chain-rule map for the corner order above.
      const double Ts[4] = {0.25, 0.25, 0.25, 0.25};
      const double Tx[4] = {-ax, ax, -ax, ax};
      const double Ty[4] = {-ay, -ay, ay, ay};
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const double v =
              Ts[a] * (e.Fss * Ts[b] + e.Fspx * Tx[b] + e.Fspy * Ty[b]) +
              Tx[a] * (e.Fspx * Ts[b] + e.Fxx * Tx[b] + e.Fxy * Ty[b]) +
              Ty[a] * (e.Fspy * Ts[b] + e.Fxy * Tx[b] + e.Fyy * Ty[b]);
          trip.emplace_back(ids[a], ids[b], wc * v);
        }
    }
  SparseMat H(grid_.size(), grid_.size());
  H.setFromTriplets(trip.begin(), trip.end());
  return H;
}

double AreaProblem::first_variation(const RealField& u, const RealField& dir) const {
  return (gradient(u) * dir).sum();
}

double AreaProblem::area_cell_value(int ci, int cj, const RealField& u) const {
  return cell_eval(ci, cj, u, 0).F;
}

RealField AreaProblem::pde_residual(const RealField& u) const {
  const RealField g = gradient(u);
  RealField r = RealField::Zero(grid_.size());
  for (int j = 1; j < grid_.ny - 1; ++j)
    for (int i = 1; i < grid_.nx - 1; ++i) {
      const int id = grid_.id(i, j);
      const double d = std::sqrt(fam_.g(grid_.x(i), grid_.y(j), u[id]).determinant());
      r[id] = g[id] / (weights_[id] * d);
    }
  return r;
}

// ---------------------------------------------------------------------------
// Dirichlet solve machinery.
// ---------------------------------------------------------------------------

DirichletSolver::DirichletSolver(const Grid2D& grid, const SparseMat& full, bool check_spd)
    : grid_(grid) {
  const int n = grid.size();
  interior_of_node_.assign(n, -1);
  for (int j = 1; j < grid.ny - 1; ++j)
    for (int i = 1; i < grid.nx - 1; ++i) {
      interior_of_node_[grid.id(i, j)] = static_cast<int>(node_of_interior_.size());
      node_of_interior_.push_back(grid.id(i, j));
    }
  const int ni = static_cast<int>(node_of_interior_.size());

  std::vector<Eigen::Triplet<double>> tii, tib;
  for (int col = 0; col < full.outerSize(); ++col)
    for (SparseMat::InnerIterator it(full, col); it; ++it) {
      const int ri = interior_of_node_[it.row()];
      if (ri < 0) continue;
      const int ci = interior_of_node_[it.col()];
      if (ci >= 0)
        tii.emplace_back(ri, ci, it.value());
      else
        tib.emplace_back(ri, static_cast<int>(it.col()), it.value());
    }
  A_ii_.resize(ni, ni);
  A_ii_.setFromTriplets(tii.begin(), tii.end());
  A_ib_.resize(ni, grid.size());
  A_ib_.setFromTriplets(tib.begin(), tib.end());

  ldlt_.compute(A_ii_);
  if (ldlt_.info() != Eigen::Success)
    throw EigenvalueObstruction("interior operator factorization failed");
  min_pivot_ = ldlt_.vectorD().minCoeff();
  if (check_spd && !(min_pivot_ > 0.0))
    throw EigenvalueObstruction(
        "stability operator is not positive definite on this background");
}

Eigen::VectorXd DirichletSolver::solve_interior(const Eigen::VectorXd& rhs_i,
                                                const Eigen::VectorXd& b_full) const {
  return ldlt_.solve(rhs_i - A_ib_ * b_full);
}

RealField DirichletSolver::solve(const RealField& rhs, const RealField& boundary) const {
  const int ni = static_cast<int>(node_of_interior_.size());
  Eigen::VectorXd rhs_i(ni);
  for (int r = 0; r < ni; ++r) rhs_i[r] = rhs[node_of_interior_[r]];
  Eigen::VectorXd b_full = Eigen::VectorXd::Zero(grid_.size());
  for (int id = 0; id < grid_.size(); ++id)
    if (interior_of_node_[id] < 0) b_full[id] = boundary[id];
  const Eigen::VectorXd x = solve_interior(rhs_i, b_full);
  RealField out(grid_.size());
  for (int id = 0; id < grid_.size(); ++id) out[id] = b_full[id];
  for (int r = 0; r < ni; ++r) out[node_of_interior_[r]] = x[r];
  return out;
}

ComplexField DirichletSolver::solve(const ComplexField& rhs, const ComplexField& boundary) const {
  const RealField xr = solve(RealField(rhs.real()), RealField(boundary.real()));
  const RealField xi = solve(RealField(rhs.imag()), RealField(boundary.imag()));
  ComplexField out(xr.size());
  for (int k = 0; k < xr.size(); ++k) out[k] = Complex(xr[k], xi[k]);
  return out;
}

// ---------------------------------------------------------------------------
// Damped Newton on the discrete area.
// ---------------------------------------------------------------------------

namespace {

double scaled_grad_norm(const Grid2D& g, const RealField& grad, const RealField& w) {
  double m = 0.0;
  for (int j = 1; j < g.ny - 1; ++j)
    for (int i = 1; i < g.nx - 1; ++i) {
      const int id = g.id(i, j);
      m = std::max(m, std::abs(grad[id]) / w[id]);
    }
  return m;
}

}  // namespace

ForwardSolution solve_forward(const AreaProblem& prob, const RealField& boundary_data,
                              const NewtonOptions& opt) {
  const Grid2D& g = prob.grid();
  const RealField w = trapezoid_weights(g);

  RealField u = RealField::Zero(g.size());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (g.on_boundary(i, j)) u[g.id(i, j)] = boundary_data[g.id(i, j)];

  ForwardSolution sol;
  double area_u = prob.area(u);
  for (int iter = 0; iter <= opt.max_iter; ++iter) {
    const RealField grad = prob.gradient(u);
    sol.grad_norm = scaled_grad_norm(g, grad, w);
    sol.newton_iters = iter;
    if (sol.grad_norm <= opt.tol) {
      sol.u = u;
      sol.area = area_u;
      return sol;
    }
    if (iter == opt.max_iter) break;

    // Newton direction; fall back to a Levenberg shift if the Hessian is
    // indefinite away from the minimum.
    SparseMat H = prob.hessian(u);
    std::unique_ptr<DirichletSolver> ds;
    double lam = 0.0;
    for (int attempt = 0; attempt < 40; ++attempt) {
      try {
        ds = std::make_unique<DirichletSolver>(g, H, true);
        break;
      } catch (const EigenvalueObstruction&) {
        const double bump = (lam == 0.0) ? 1e-8 : lam * 9.0;
        SparseMat shift(g.size(), g.size());
        shift.setIdentity();
        H = H + bump * shift;
        lam += bump;
        ds.reset();
      }
    }
    if (!ds) throw NewtonDiverged("could not stabilize the Newton system");

    const RealField delta = ds->solve(RealField(-grad), RealField::Zero(g.size()));
    const double slope = (grad * delta).sum();

    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < opt.max_linesearch; ++ls) {
      const RealField trial = u + alpha * delta;
      double area_trial;
      try {
        area_trial = prob.area(trial);
      } catch (const NotSPD&) {
        alpha *= 0.5;  // stepped outside the SPD region of the family
        continue;
      }
      // The merit decrease near convergence (~ alpha^2 * |delta|_H^2) drops
      // below the roundoff of the area sum long before the gradient reaches
      // its own floor; allow that much noise or the search rejects good steps.
      const double noise = 32.0 * std::numeric_limits<double>::epsilon() *
                           (std::abs(area_u) + 1.0);
      if (area_trial <= area_u + opt.armijo * alpha * slope + noise) {
        u = trial;
        area_u = area_trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) throw NewtonDiverged("line search failed to make progress");
  }
  std::ostringstream os;
  os << "Newton did not reach tol " << opt.tol << " in " << opt.max_iter
     << " iterations (scaled grad " << sol.grad_norm << ")";
  throw NewtonDiverged(os.str());
}

// ---------------------------------------------------------------------------
// Boundary fluxes.
// ---------------------------------------------------------------------------

RealField dn_map(const AreaProblem& prob, const ForwardSolution& sol) {
  const Grid2D& g = prob.grid();
  const BoundaryIndex b = boundary_index(g);
  const RealField ux = grad_x(g, sol.u), uy = grad_y(g, sol.u);
  RealField out(b.size());
  for (int kidx = 0; kidx < b.size(); ++kidx) {
    const int id = b.node[kidx];
    const int i = id % g.nx, j = id / g.nx;
    const Mat2 k = prob.family().g(g.x(i), g.y(j), sol.u[id]).inverse();
    const Eigen::Vector2d n(b.normal[kidx][0], b.normal[kidx][1]);
    const Eigen::Vector2d du(ux[id], uy[id]);
    const double knn = n.dot(k * n);
    const double dnu = n.dot(k * du) / std::sqrt(knn);
    out[kidx] = dnu / std::sqrt(1.0 + du.dot(k * du));
  }
  return out;
}

RealField boundary_metric_weights(const AreaProblem& prob, const RealField& u) {
  const Grid2D& g = prob.grid();
  const BoundaryIndex b = boundary_index(g);
  RealField out(b.size());
  for (int kidx = 0; kidx < b.size(); ++kidx) {
    const int id = b.node[kidx];
    const int i = id % g.nx, j = id / g.nx;
    const Mat2 gm = prob.family().g(g.x(i), g.y(j), u[id]);
    const double horiz = std::sqrt(gm(0, 0)), vert = std::sqrt(gm(1, 1));
    double stretch;
    if (b.corner[kidx])
      stretch = 0.5 * (horiz + vert);
    else if (j == 0 || j == g.ny - 1)
      stretch = horiz;  // tangent along x
    else
      stretch = vert;  // tangent along y
    out[kidx] = b.weight[kidx] * stretch;
  }
  return out;
}

RealField dn_from_areas(const AreaProblem& prob, const ForwardSolution& sol, double eps) {
  const Grid2D& g = prob.grid();
  const BoundaryIndex b = boundary_index(g);
  const RealField wg = boundary_metric_weights(prob, sol.u);
  const double wc = g.dx() * g.dy();
  const double e = eps * (1.0 + sol.u.abs().maxCoeff());

  RealField out(b.size());
  RealField u = sol.u;
  for (int kidx = 0; kidx < b.size(); ++kidx) {
    const int id = b.node[kidx];
    const int i = id % g.nx, j = id / g.nx;
    // Only cells touching this node change; sum their integrand difference.
    double diff = 0.0;
    for (int cj = std::max(0, j - 1); cj <= std::min(g.ny - 2, j); ++cj)
      for (int ci = std::max(0, i - 1); ci <= std::min(g.nx - 2, i); ++ci) {
        const double keep = u[id];
        u[id] = keep + e;
        const double fp = prob.area_cell_value(ci, cj, u);
        u[id] = keep - e;
        const double fm = prob.area_cell_value(ci, cj, u);
        u[id] = keep;
        diff += fp - fm;
      }
    out[kidx] = wc * diff / (2.0 * e) / wg[kidx];
  }
  return out;
}

}  // namespace minsurf
