#include "minsurf/cgo.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "minsurf/errors.hpp"

namespace minsurf {

namespace {

// ---------------------------------------------------------------------------
// Polynomial helpers (coefficient vectors in the standard basis, low first).
// ---------------------------------------------------------------------------

Complex poly_eval(const std::vector<Complex>& c, Complex z) {
  Complex acc{0.0, 0.0};
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * z + *it;
  return acc;
}

std::vector<Complex> poly_derivative(const std::vector<Complex>& c) {
  if (c.size() <= 1) return {Complex{0.0, 0.0}};
  std::vector<Complex> d(c.size() - 1);
  for (size_t k = 1; k < c.size(); ++k) d[k - 1] = double(k) * c[k];
  return d;
}

std::vector<Complex> poly_multiply(const std::vector<Complex>& a,
                                   const std::vector<Complex>& b) {
  std::vector<Complex> out(a.size() + b.size() - 1, Complex{0.0, 0.0});
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

/// Coefficients of p(w + shift) given those of p(w) (Taylor shift by
/// synthetic division: repeatedly divide by (w − (−shift))).
std::vector<Complex> poly_shift(std::vector<Complex> c, Complex shift) {
  const size_t n = c.size();
  for (size_t k = 0; k + 1 < n; ++k)
    for (size_t j = n - 1; j > k; --j) c[j - 1] += shift * c[j];
  return c;
}

/// Roots of the polynomial via the companion matrix of its monic form.
std::vector<Complex> poly_roots(const std::vector<Complex>& c) {
  int deg = static_cast<int>(c.size()) - 1;
  double scale = 0.0;
  for (const auto& v : c) scale = std::max(scale, std::abs(v));
  while (deg > 0 && std::abs(c[deg]) < 1e-14 * std::max(1.0, scale)) --deg;
  if (deg < 1) return {};
  Eigen::MatrixXcd comp = Eigen::MatrixXcd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i) comp(i, deg - 1) = -c[i] / c[deg];
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(comp, false);
  std::vector<Complex> roots(deg);
  for (int i = 0; i < deg; ++i) roots[i] = es.eigenvalues()[i];
  return roots;
}

// C^∞ smoothstep: 0 for t ≤ 0, 1 for t ≥ 1.
double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

/// e^{sign·2iψ/h}·χ·f with the standard support cutoff χ.
ComplexField conjugated_input(const Grid2D& g, const ComplexField& f,
                              const RealField& psi, double h, int sign,
                              double margin) {
  const RealField chi = support_cutoff(g, margin);
  ComplexField out(g.size());
  for (int id = 0; id < g.size(); ++id) {
    const double arg = sign * 2.0 * psi[id] / h;
    out[id] = std::polar(chi[id], arg) * f[id];
  }
  return out;
}

/// Fills the nodes within r_fill of z0 by a degree-2 least-squares
/// polynomial fitted on the surrounding annulus (removable singularity of
/// the quotient by ∂̄ψ).
void fill_near_center(const Grid2D& g, Complex z0, ComplexField& u) {
  const double r_fill = 2.5 * std::max(g.dx(), g.dy());
  std::vector<int> inner, ring;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double r = std::abs(Complex(g.x(i), g.y(j)) - z0);
      if (r <= r_fill)
        inner.push_back(g.id(i, j));
      else if (r <= 4.0 * r_fill)
        ring.push_back(g.id(i, j));
    }
  if (inner.empty() || ring.size() < 12) return;
  Eigen::MatrixXcd Amat(ring.size(), 6);
  Eigen::VectorXcd rhs(ring.size());
  auto monomials = [&](int id, Eigen::RowVectorXcd& row) {
    const double X = (g.x(id % g.nx) - z0.real()) / r_fill;
    const double Y = (g.y(id / g.nx) - z0.imag()) / r_fill;
    row.resize(6);
    row << 1.0, X, Y, X * X, X * Y, Y * Y;
  };
  Eigen::RowVectorXcd row;
  for (size_t k = 0; k < ring.size(); ++k) {
    monomials(ring[k], row);
    Amat.row(k) = row;
    rhs[k] = u[ring[k]];
  }
  const Eigen::VectorXcd cf = Amat.colPivHouseholderQr().solve(rhs);
  for (int id : inner) {
    monomials(id, row);
    u[id] = (row * cf)(0, 0);
  }
}

struct SeriesResult {
  ComplexField s, r, last;
  std::vector<double> norms;
  double ratio = 0.0;
  double tail = 0.0;
};

/// Shared Neumann-series driver.  inv_r plays ∂̄_ψ^{−1} (applied to series
/// elements and once at the end), inv_s plays ∂̄_ψ^{*−1}.
template <class InvR, class InvS>
SeriesResult run_series(const Grid2D& g, const ComplexField& a_field,
                        const RealField& q, int J, InvR&& inv_r,
                        InvS&& inv_s) {
  SeriesResult out;
  ComplexField qa(g.size());
  for (int id = 0; id < g.size(); ++id) qa[id] = q[id] * a_field[id];
  ComplexField term = -0.25 * inv_s(qa);
  out.s = term;
  out.norms.push_back(l2_norm(g, term));
  for (int j = 1; j <= J; ++j) {
    ComplexField w = inv_r(term);
    for (int id = 0; id < g.size(); ++id) w[id] *= q[id];
    term = 0.25 * inv_s(w);
    out.s += term;
    out.norms.push_back(l2_norm(g, term));
    if (out.norms[j - 1] > 0.0) {
      const double rho = out.norms[j] / out.norms[j - 1];
      if (rho >= 0.9) {
        std::ostringstream msg;
        msg << "Neumann series not contracting: term ratio " << rho
            << " at application " << j << " (need < 0.9)";
        throw SeriesDiverging(msg.str());
      }
      out.ratio = std::max(out.ratio, rho);
    }
  }
  out.last = term;
  out.r = -inv_r(out.s);
  out.tail = out.ratio < 1.0
                 ? out.norms.back() * out.ratio / (1.0 - out.ratio)
                 : out.norms.back();
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// CGOPhase
// ---------------------------------------------------------------------------

Complex CGOPhase::at(Complex z) const { return poly_eval(coeff, z); }

Complex CGOPhase::derivative(Complex z) const {
  return poly_eval(poly_derivative(coeff), z);
}

Complex CGOPhase::second_derivative(Complex z) const {
  return poly_eval(poly_derivative(poly_derivative(coeff)), z);
}

RealField CGOPhase::psi(const Grid2D& g) const {
  return sample(g, [&](double x, double y) { return at({x, y}).imag(); });
}

RealField CGOPhase::phi(const Grid2D& g) const {
  return sample(g, [&](double x, double y) { return at({x, y}).real(); });
}

ComplexField CGOPhase::dbar_psi(const Grid2D& g) const {
  // ψ = (Φ − Φ̄)/(2i), so ∂̄ψ = −conj(Φ')/(2i) = (i/2)·conj(Φ').
  return sample(g, [&](double x, double y) {
    return Complex{0.0, 0.5} * std::conj(derivative({x, y}));
  });
}

double CGOPhase::max_gradient(const Grid2D& g) const {
  double m = 0.0;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      m = std::max(m, std::abs(derivative({g.x(i), g.y(j)})));
  return m;
}

CGOPhase make_phase(std::vector<Complex> coeff, Complex z0) {
  if (coeff.size() < 3)
    throw ConfigInvalid("phase polynomial must be at least quadratic");
  CGOPhase p;
  p.coeff = std::move(coeff);
  p.z0 = z0;
  double scale = 0.0;
  for (const auto& c : p.coeff) scale = std::max(scale, std::abs(c));
  scale = std::max(scale, 1.0);
  if (std::abs(p.derivative(z0)) > 1e-10 * scale)
    throw ConfigInvalid("designated z0 is not a critical point of the phase");
  const Complex d2 = p.second_derivative(z0);
  if (std::abs(d2) < 1e-12 * scale)
    throw ConfigInvalid("phase is degenerate (not Morse) at z0");

  p.critical_points = poly_roots(poly_derivative(p.coeff));
  for (const auto& zc : p.critical_points)
    p.morse.push_back(std::abs(p.second_derivative(zc)) > 1e-10 * scale);

  // Hess Φ = Φ''(z0)·[[1, i], [i, −1]] split into S + iA.
  const double re = d2.real(), im = d2.imag();
  p.S << re, -im, -im, -re;
  p.A << im, re, re, -im;
  return p;
}

CGOPhase standard_quadratic_phase(Complex z0) {
  // (z − z0)²/2 = z0²/2 − z0·z + z²/2
  return make_phase({0.5 * z0 * z0, -z0, Complex{0.5, 0.0}}, z0);
}

// ---------------------------------------------------------------------------
// CGOAmplitude
// ---------------------------------------------------------------------------

Complex CGOAmplitude::at(Complex z) const { return poly_eval(coeff, z); }

ComplexField CGOAmplitude::field(const Grid2D& g) const {
  return sample(g, [&](double x, double y) { return at({x, y}); });
}

CGOAmplitude unit_amplitude() {
  CGOAmplitude a;
  a.coeff = {Complex{1.0, 0.0}};
  a.order = 0;
  return a;
}

CGOAmplitude amplitude_for(const CGOPhase& phase, int order) {
  if (order < 1) throw ConfigInvalid("amplitude vanishing order must be >= 1");
  std::vector<Complex> others;
  for (const auto& zc : phase.critical_points)
    if (std::abs(zc - phase.z0) > 1e-8) others.push_back(zc);
  CGOAmplitude a;
  a.order = order;
  if (others.empty()) {
    a.coeff = {Complex{1.0, 0.0}};
    return a;
  }
  // P(z) = Π (z − z_i)^order vanishes at the other critical points;
  // multiplying by the truncated Taylor series of 1/P at z0 restores
  // a = 1 + O((z − z0)^order) there.
  std::vector<Complex> P = {Complex{1.0, 0.0}};
  for (const auto& zc : others) {
    const std::vector<Complex> lin = {-zc, Complex{1.0, 0.0}};
    for (int k = 0; k < order; ++k) P = poly_multiply(P, lin);
  }
  // Taylor coefficients of P around z0, then series inversion to order-1.
  const std::vector<Complex> Pt = poly_shift(P, phase.z0);
  std::vector<Complex> Q(order, Complex{0.0, 0.0});
  Q[0] = 1.0 / Pt[0];
  for (int k = 1; k < order; ++k) {
    Complex acc{0.0, 0.0};
    for (int m = 1; m <= k; ++m)
      if (m < static_cast<int>(Pt.size())) acc += Pt[m] * Q[k - m];
    Q[k] = -acc * Q[0];
  }
  // Back to the standard basis: Q is in powers of (z − z0).
  a.coeff = poly_multiply(P, poly_shift(Q, -phase.z0));
  return a;
}

// ---------------------------------------------------------------------------
// Conjugated inverses
// ---------------------------------------------------------------------------

double max_psi_gradient(const Grid2D& g, const RealField& psi) {
  const RealField px = grad_x(g, psi), py = grad_y(g, psi);
  double m = 0.0;
  for (int id = 0; id < g.size(); ++id)
    m = std::max(m, std::hypot(px[id], py[id]));
  return m;
}

void require_resolved(const Grid2D& g, double max_grad_psi, double h,
                      double guard_factor) {
  if (h <= 0.0) throw ConfigInvalid("semiclassical parameter h must be > 0");
  if (max_grad_psi <= 0.0) return;
  const double spacing = std::max(g.dx(), g.dy());
  const double bound = h / (guard_factor * max_grad_psi);
  if (spacing > bound) {
    std::ostringstream msg;
    msg << "grid spacing " << spacing << " does not resolve the oscillation: "
        << "need <= " << bound << " (h = " << h << ", max|grad psi| = "
        << max_grad_psi << ")";
    throw UnderResolved(msg.str());
  }
}

ComplexField dbar_psi_inverse(const Grid2D& g, const ComplexField& f,
                              const RealField& psi, double h, double margin) {
  require_resolved(g, max_psi_gradient(g, psi), h);
  return dbar_inverse(g, conjugated_input(g, f, psi, h, -1, margin),
                      ConvPath::fft, margin);
}

ComplexField dbar_psi_star_inverse(const Grid2D& g, const ComplexField& f,
                                   const RealField& psi, double h,
                                   double margin) {
  require_resolved(g, max_psi_gradient(g, psi), h);
  return del_inverse(g, conjugated_input(g, f, psi, h, +1, margin),
                     ConvPath::fft, margin);
}

ComplexField del_psi_inverse(const Grid2D& g, const ComplexField& f,
                             const RealField& psi, double h, double margin) {
  require_resolved(g, max_psi_gradient(g, psi), h);
  return del_inverse(g, conjugated_input(g, f, psi, h, -1, margin),
                     ConvPath::fft, margin);
}

ComplexField del_psi_star_inverse(const Grid2D& g, const ComplexField& f,
                                  const RealField& psi, double h,
                                  double margin) {
  require_resolved(g, max_psi_gradient(g, psi), h);
  return dbar_inverse(g, conjugated_input(g, f, psi, h, +1, margin),
                      ConvPath::fft, margin);
}

// ---------------------------------------------------------------------------
// CGO construction
// ---------------------------------------------------------------------------

CGOSolution build_cgo(const Grid2D& g, double h, const CGOPhase& phase,
                      const CGOAmplitude& amplitude, const RealField& q,
                      int J, double margin, bool with_tilde) {
  if (J < 1) throw ConfigInvalid("Neumann truncation J must be >= 1");
  const RealField psi = phase.psi(g);
  require_resolved(g, phase.max_gradient(g), h);

  CGOSolution sol;
  sol.h = h;
  sol.terms = J;
  sol.phase = phase;
  sol.amplitude = amplitude;

  const ComplexField a_field = amplitude.field(g);
  auto inv_r = [&](const ComplexField& w) {
    return dbar_psi_inverse(g, w, psi, h, margin);
  };
  auto inv_s = [&](const ComplexField& w) {
    return dbar_psi_star_inverse(g, w, psi, h, margin);
  };
  SeriesResult main = run_series(g, a_field, q, J, inv_r, inv_s);
  sol.s = std::move(main.s);
  sol.r = std::move(main.r);
  sol.last_term = std::move(main.last);
  sol.term_norms = std::move(main.norms);
  sol.ratio = main.ratio;
  sol.tail_bound = main.tail;

  if (with_tilde) {
    auto inv_rt = [&](const ComplexField& w) {
      return del_psi_inverse(g, w, psi, h, margin);
    };
    auto inv_st = [&](const ComplexField& w) {
      return del_psi_star_inverse(g, w, psi, h, margin);
    };
    SeriesResult tilde =
        run_series(g, a_field.conjugate(), q, J, inv_rt, inv_st);
    sol.s_tilde = std::move(tilde.s);
    sol.r_tilde = std::move(tilde.r);
    sol.last_term_tilde = std::move(tilde.last);
    sol.term_norms_tilde = std::move(tilde.norms);
    sol.ratio = std::max(sol.ratio, tilde.ratio);
    sol.tail_bound = std::max(sol.tail_bound, tilde.tail);
  }
  return sol;
}

double residual_check(const Grid2D& g, const CGOSolution& sol,
                      const RealField& q, double margin) {
  // e^{−Φ/h}(Δ+q)v = 4e^{−2iψ/h}∂s + q(a + r).  Expanding s term by term
  // and using ∂∂⁻¹ = id, ∂̄∂̄⁻¹ = id on the (cutoff-supported) inputs:
  //   4e^{−2iψ/h}∂(M^j b) = q·∂̄_ψ^{−1}(M^{j−1}b) for j ≥ 1, and −qa for b,
  // so the sum telescopes against q(a + r) and only the tail survives:
  //   e^{−Φ/h}(Δ+q)v = −q·∂̄_ψ^{−1}(M^J b).
  const RealField psi = sol.phase.psi(g);
  ComplexField w = dbar_psi_inverse(g, sol.last_term, psi, sol.h, margin);
  for (int id = 0; id < g.size(); ++id) w[id] *= q[id];
  return l2_norm(g, w) / l2_norm(g, sol.amplitude.field(g));
}

double fd_residual(const Grid2D& g, const CGOSolution& sol,
                   const RealField& q, double margin) {
  const RealField phi = sol.phase.phi(g), psi = sol.phase.psi(g);
  const ComplexField a_field = sol.amplitude.field(g);
  const RealField chi = support_cutoff(g, margin);
  ComplexField v(g.size());
  for (int id = 0; id < g.size(); ++id)
    v[id] = std::exp(Complex(phi[id], psi[id]) / sol.h) *
            (a_field[id] + sol.r[id]);
  RealField res = RealField::Zero(g.size());
  const double ix = 1.0 / (g.dx() * g.dx()), iy = 1.0 / (g.dy() * g.dy());
  for (int j = 1; j < g.ny - 1; ++j)
    for (int i = 1; i < g.nx - 1; ++i) {
      const int id = g.id(i, j);
      if (chi[id] != 1.0) continue;  // v solves the PDE on the cutoff core
      const Complex lap = -((v[id + 1] + v[id - 1] - 2.0 * v[id]) * ix +
                            (v[id + g.nx] + v[id - g.nx] - 2.0 * v[id]) * iy);
      res[id] = std::abs(lap + q[id] * v[id]) * std::exp(-phi[id] / sol.h);
    }
  return l2_norm(g, res) / l2_norm(g, a_field);
}

// ---------------------------------------------------------------------------
// Oscillatory integrals and the decay calculus
// ---------------------------------------------------------------------------

Complex oscillatory_integral(const Grid2D& g, const ComplexField& f,
                             const RealField& psi, double h, int multiplier) {
  if (multiplier != 2 && multiplier != 4)
    throw ConfigInvalid("oscillatory multiplier must be 2 or 4");
  require_resolved(g, max_psi_gradient(g, psi), h);
  ComplexField integrand(g.size());
  for (int id = 0; id < g.size(); ++id)
    integrand[id] = std::polar(1.0, multiplier * psi[id] / h) * f[id];
  return integrate(g, integrand);
}

std::vector<ComplexField> expansion_iterates(const Grid2D& g,
                                             const ComplexField& f,
                                             const CGOPhase& phase, int K,
                                             int deg_f) {
  if (K < 0) throw ConfigInvalid("iterate count K must be >= 0");
  if (deg_f < 2 * K + 1) {
    std::ostringstream msg;
    msg << "expansion to K = " << K << " needs deg(f) >= " << 2 * K + 1
        << ", got " << deg_f;
    throw DegreeTooLow(msg.str());
  }
  const ComplexField denom = phase.dbar_psi(g);
  std::vector<ComplexField> out;
  ComplexField cur(g.size());
  for (int id = 0; id < g.size(); ++id)
    cur[id] = Complex{0.0, 0.5} * f[id] / denom[id];
  fill_near_center(g, phase.z0, cur);
  out.push_back(cur);
  for (int j = 1; j <= K; ++j) {
    // The recursion sign makes the decomposition Σ h^j F^j hold without
    // alternation (one minus per integration by parts).
    const ComplexField db = dbar(g, out.back());
    for (int id = 0; id < g.size(); ++id)
      cur[id] = Complex{0.0, -0.5} * db[id] / denom[id];
    fill_near_center(g, phase.z0, cur);
    out.push_back(cur);
  }
  return out;
}

RealField radial_bump(const Grid2D& g, Complex c, double r_flat,
                      double r_zero) {
  return sample(g, [&](double x, double y) {
    const double r = std::abs(Complex(x, y) - c);
    return smoothstep((r_zero - r) / (r_zero - r_flat));
  });
}

std::vector<SlopeRow> calculus_slope_suite(
    const CGOPhase& phase, const std::function<double(double, double)>& q,
    const std::vector<int>& monomial_degrees,
    const std::vector<int>& derivative_orders, const CGOSweepConfig& cfg) {
  // Row layout: one row per (degree, derivative order) pair plus the two
  // fixed product cases.
  std::vector<SlopeRow> rows;
  for (int d : monomial_degrees)
    for (int l : derivative_orders) {
      if (l > d) continue;
      SlopeRow row;
      row.label = "decay";
      row.deg = d;
      row.l = l;
      row.floor_level = (d - l) / 2 + 1;
      rows.push_back(row);
    }
  {
    SlopeRow row;
    row.label = "product-order2";
    row.deg = 4;
    row.l = 0;
    row.floor_level = 3;
    rows.push_back(row);
    row.label = "oneform-product";
    row.deg = 3;
    row.l = 1;
    row.floor_level = 2;
    rows.push_back(row);
  }

  const double R = cfg.half_width;
  const Complex z0 = phase.z0;
  const CGOAmplitude amp = phase.critical_points.size() > 1
                               ? amplitude_for(phase, 6)
                               : unit_amplitude();

  for (double h : cfg.hs) {
    // Slave the grid to the oscillation guard; analytic gradient bound with
    // a small safety factor so the field-based guard inside the operators
    // cannot trip.
    const Grid2D probe = Grid2D::box(z0.real() - R, z0.real() + R,
                                     z0.imag() - R, z0.imag() + R, 33, 33);
    const double grad = phase.max_gradient(probe);
    int n = 1 + static_cast<int>(
                    std::ceil(2.0 * R * cfg.guard_factor * grad * 1.02 / h));
    if (n % 2 == 0) ++n;
    n = std::max(n, 33);
    if (n > cfg.max_nodes) {
      for (auto& row : rows) row.dropped.push_back(h);
      continue;
    }
    const Grid2D g = Grid2D::box(z0.real() - R, z0.real() + R,
                                 z0.imag() - R, z0.imag() + R, n, n);
    const RealField qf = sample(g, q);
    const RealField psi = phase.psi(g);
    const CGOSolution sol = build_cgo(g, h, phase, amp, qf, cfg.J, cfg.margin);
    const RealField bump = radial_bump(g, z0, 0.3 * R, 0.6 * R);

    auto monomial_field = [&](int d) {
      const int k = (d + 1) / 2;
      return sample(g, [&](double x, double y) {
        const Complex w = Complex(x, y) - z0;
        Complex m{1.0, 0.0};
        for (int t = 0; t < k; ++t) m *= w;
        for (int t = 0; t < d - k; ++t) m *= std::conj(w);
        return m;
      });
    };

    for (auto& row : rows) {
      ComplexField factor;
      if (row.label == "decay") {
        factor = sol.r;
        for (int t = 0; t < row.l; ++t) factor = del(g, factor);
      } else if (row.label == "product-order2") {
        factor = sol.r * sol.r_tilde;
      } else {  // one-form case: ∂r_h times an order-1 polynomial in r_h
        factor = del(g, sol.r) * sol.r;
      }
      const ComplexField mono = monomial_field(row.deg);
      ComplexField f(g.size());
      for (int id = 0; id < g.size(); ++id)
        f[id] = bump[id] * mono[id] * factor[id];
      const Complex val = oscillatory_integral(g, f, psi, h, 4);
      row.hs.push_back(h);
      row.values.push_back(std::abs(val));
    }
  }

  for (auto& row : rows) {
    if (row.hs.size() >= 3) {
      row.slope = fit_log_slope(row.hs, row.values);
      row.pass = row.slope >= row.floor_level - 0.1;
    }
  }
  return rows;
}

}  // namespace minsurf
