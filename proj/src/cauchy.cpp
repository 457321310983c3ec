/**
 * @file  cauchy.cpp
 * @brief Exact-cell-kernel Cauchy transform, direct and FFT paths.
 */
#include "minsurf/cauchy.hpp"

#include <fftw3.h>

#include <cmath>
#include <vector>

namespace minsurf {

namespace {

/// Double primitive of 1/z: P(z) = −i z (log z − 1), written in real/imag
/// parts so the branch is controlled by atan2 (cut on the negative x-axis,
/// signed zeros select the side). Continuous at z = 0.
Complex primitive(double x, double y) {
  const double r2 = x * x + y * y;
  if (r2 == 0.0) return {0.0, 0.0};
  const double L = 0.5 * std::log(r2);
  const double A = std::atan2(y, x);
  return {x * A + y * (L - 1.0), y * A - x * (L - 1.0)};
}

/// Four-corner difference on a rectangle that does not cross the cut.
Complex corner_difference(double x0, double x1, double y0, double y1) {
  return primitive(x1, y1) - primitive(x0, y1) - primitive(x1, y0) +
         primitive(x0, y0);
}

/// ∬ 1/z over the rectangle, splitting at y = 0 when it straddles the cut;
/// the y = 0 corners carry the sign of the half they close.
Complex cell_integral(double x0, double x1, double y0, double y1) {
  if (y0 < 0.0 && y1 > 0.0)
    return corner_difference(x0, x1, y0, -0.0) +
           corner_difference(x0, x1, +0.0, y1);
  if (y1 == 0.0) return corner_difference(x0, x1, y0, -0.0);
  if (y0 == 0.0) return corner_difference(x0, x1, +0.0, y1);
  return corner_difference(x0, x1, y0, y1);
}

/// Kernel table over all node offsets: K(p,q) = ∬_cell(pΔx, qΔy) 1/z dA,
/// the exact integral over the dx×dy cell centered at the offset.
std::vector<Complex> kernel_table(const Grid2D& g) {
  const int px = 2 * g.nx - 1, py = 2 * g.ny - 1;
  const double ax = 0.5 * g.dx(), ay = 0.5 * g.dy();
  std::vector<Complex> K(static_cast<size_t>(px) * py);
  for (int q = -(g.ny - 1); q <= g.ny - 1; ++q) {
    const double cy = q * g.dy();
    for (int p = -(g.nx - 1); p <= g.nx - 1; ++p) {
      const double cx = p * g.dx();
      K[static_cast<size_t>(q + g.ny - 1) * px + (p + g.nx - 1)] =
          cell_integral(cx - ax, cx + ax, cy - ay, cy + ay);
    }
  }
  return K;
}

void check_support(const Grid2D& g, const ComplexField& f, double margin) {
  const double mx = margin * (g.x1 - g.x0), my = margin * (g.y1 - g.y0);
  const double tol = 1e-10 * f.abs().maxCoeff();
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double x = g.x(i), y = g.y(j);
      const bool in_margin = x < g.x0 + mx || x > g.x1 - mx || y < g.y0 + my ||
                             y > g.y1 - my;
      if (in_margin && std::abs(f[g.id(i, j)]) > tol)
        throw SupportViolation(
            "field is not negligible on the margin strip; apply "
            "support_cutoff before inverting");
    }
}

ComplexField convolve_direct(const Grid2D& g, const ComplexField& f,
                             const std::vector<Complex>& K) {
  const int px = 2 * g.nx - 1;
  ComplexField out = ComplexField::Zero(g.size());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      Complex acc{0.0, 0.0};
      for (int jj = 0; jj < g.ny; ++jj) {
        const size_t krow = static_cast<size_t>(j - jj + g.ny - 1) * px;
        const int frow = jj * g.nx;
        for (int ii = 0; ii < g.nx; ++ii)
          acc += f[frow + ii] * K[krow + (i - ii + g.nx - 1)];
      }
      out[g.id(i, j)] = acc;
    }
  return out;
}

ComplexField convolve_fft(const Grid2D& g, const ComplexField& f,
                          const std::vector<Complex>& K) {
  const int Lx = 2 * g.nx, Ly = 2 * g.ny;
  const size_t n = static_cast<size_t>(Lx) * Ly;
  std::vector<Complex> A(n, Complex{0.0, 0.0}), B(n, Complex{0.0, 0.0});

  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      A[static_cast<size_t>(j) * Lx + i] = f[g.id(i, j)];
  // kernel offsets wrap negatively around the padded torus
  const int px = 2 * g.nx - 1;
  for (int q = -(g.ny - 1); q <= g.ny - 1; ++q)
    for (int p = -(g.nx - 1); p <= g.nx - 1; ++p) {
      const int wq = (q + Ly) % Ly, wp = (p + Lx) % Lx;
      B[static_cast<size_t>(wq) * Lx + wp] =
          K[static_cast<size_t>(q + g.ny - 1) * px + (p + g.nx - 1)];
    }

  auto run = [&](std::vector<Complex>& buf, int sign) {
    fftw_plan plan = fftw_plan_dft_2d(
        Ly, Lx, reinterpret_cast<fftw_complex*>(buf.data()),
        reinterpret_cast<fftw_complex*>(buf.data()), sign, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  };
  run(A, FFTW_FORWARD);
  run(B, FFTW_FORWARD);
  for (size_t t = 0; t < n; ++t) A[t] *= B[t] / static_cast<double>(n);
  run(A, FFTW_BACKWARD);

  ComplexField out(g.size());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      out[g.id(i, j)] = A[static_cast<size_t>(j) * Lx + i];
  return out;
}

}  // namespace

ComplexField dbar(const Grid2D& g, const ComplexField& u) {
  return 0.5 * (grad_x(g, u) + Complex{0.0, 1.0} * grad_y(g, u));
}

ComplexField del(const Grid2D& g, const ComplexField& u) {
  return 0.5 * (grad_x(g, u) - Complex{0.0, 1.0} * grad_y(g, u));
}

Complex cell_mean_inverse_z(double x0, double x1, double y0, double y1) {
  return cell_integral(x0, x1, y0, y1) / ((x1 - x0) * (y1 - y0));
}

ComplexField dbar_inverse(const Grid2D& g, const ComplexField& f,
                          ConvPath path, double margin) {
  check_support(g, f, margin);
  const std::vector<Complex> K = kernel_table(g);
  ComplexField out = (path == ConvPath::direct) ? convolve_direct(g, f, K)
                                                : convolve_fft(g, f, K);
  return ComplexField(out / M_PI);
}

ComplexField del_inverse(const Grid2D& g, const ComplexField& f,
                         ConvPath path, double margin) {
  return dbar_inverse(g, f.conjugate(), path, margin).conjugate();
}

RealField support_cutoff(const Grid2D& g, double margin) {
  // C^∞ smoothstep: 0 for t ≤ 0, 1 for t ≥ 1
  auto step = [](double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
  };
  const double mx = margin * (g.x1 - g.x0), my = margin * (g.y1 - g.y0);
  auto edge = [&](double s, double lo, double hi, double m) {
    return step((s - (lo + m)) / m) * step(((hi - m) - s) / m);
  };
  RealField chi(g.size());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      chi[g.id(i, j)] =
          edge(g.x(i), g.x0, g.x1, mx) * edge(g.y(j), g.y0, g.y1, my);
  return chi;
}

}  // namespace minsurf
