#include "minsurf/grid.hpp"

#include <cmath>

namespace minsurf {

Grid2D Grid2D::box(double x0, double x1, double y0, double y1, int nx, int ny) {
  if (nx < 3 || ny < 3 || !(x1 > x0) || !(y1 > y0))
    throw ConfigInvalid("Grid2D: need nx,ny >= 3 and a nondegenerate box");
  Grid2D g;
  g.nx = nx;
  g.ny = ny;
  g.x0 = x0;
  g.x1 = x1;
  g.y0 = y0;
  g.y1 = y1;
  return g;
}

RealField trapezoid_weights(const Grid2D& g) {
  RealField w(g.size());
  const double cell = g.dx() * g.dy();
  for (int j = 0; j < g.ny; ++j) {
    const double wy = (j == 0 || j == g.ny - 1) ? 0.5 : 1.0;
    for (int i = 0; i < g.nx; ++i) {
      const double wx = (i == 0 || i == g.nx - 1) ? 0.5 : 1.0;
      w[g.id(i, j)] = cell * wx * wy;
    }
  }
  return w;
}

BoundaryIndex boundary_index(const Grid2D& g) {
  BoundaryIndex b;
  const int nx = g.nx, ny = g.ny;
  const double dx = g.dx(), dy = g.dy();
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

  auto push = [&](int i, int j, double nx_out, double ny_out) {
    b.node.push_back(g.id(i, j));
    const bool corner = g.is_corner(i, j);
    b.corner.push_back(corner);
    // Arc trapezoid weight: half of each adjacent boundary segment.
    double w = 0.0;
    if (corner)
      w = 0.5 * (dx + dy);
    else if (j == 0 || j == ny - 1)
      w = dx;  // bottom/top edges
    else
      w = dy;  // left/right edges
    b.weight.push_back(w);
    b.normal.push_back({nx_out, ny_out});
  };

  // Bottom edge, left to right.
  push(0, 0, -inv_sqrt2, -inv_sqrt2);
  for (int i = 1; i < nx - 1; ++i) push(i, 0, 0.0, -1.0);
  push(nx - 1, 0, inv_sqrt2, -inv_sqrt2);
  // Right edge, bottom to top (corners handled at the ends).
  for (int j = 1; j < ny - 1; ++j) push(nx - 1, j, 1.0, 0.0);
  push(nx - 1, ny - 1, inv_sqrt2, inv_sqrt2);
  // Top edge, right to left.
  for (int i = nx - 2; i >= 1; --i) push(i, ny - 1, 0.0, 1.0);
  push(0, ny - 1, -inv_sqrt2, inv_sqrt2);
  // Left edge, top to bottom.
  for (int j = ny - 2; j >= 1; --j) push(0, j, -1.0, 0.0);

  return b;
}

double integrate(const Grid2D& g, const RealField& f) {
  const RealField w = trapezoid_weights(g);
  return (w * f).sum();
}

Complex integrate(const Grid2D& g, const ComplexField& f) {
  const RealField w = trapezoid_weights(g);
  Complex acc(0.0, 0.0);
  for (int k = 0; k < f.size(); ++k) acc += w[k] * f[k];
  return acc;
}

double l2_norm(const Grid2D& g, const RealField& f) {
  const RealField w = trapezoid_weights(g);
  return std::sqrt((w * f * f).sum());
}

double l2_norm(const Grid2D& g, const ComplexField& f) {
  const RealField w = trapezoid_weights(g);
  double acc = 0.0;
  for (int k = 0; k < f.size(); ++k) acc += w[k] * std::norm(f[k]);
  return std::sqrt(acc);
}

double lp_norm(const Grid2D& g, const ComplexField& f, double p) {
  const RealField w = trapezoid_weights(g);
  double acc = 0.0;
  for (int k = 0; k < f.size(); ++k) acc += w[k] * std::pow(std::abs(f[k]), p);
  return std::pow(acc, 1.0 / p);
}

double rel_l2_error(const Grid2D& g, const RealField& a, const RealField& b) {
  return l2_norm(g, RealField(a - b)) / l2_norm(g, b);
}

double fit_log_slope(const std::vector<double>& h, const std::vector<double>& v) {
  if (h.size() != v.size() || h.size() < 2)
    throw FitIllConditioned("fit_log_slope: need >= 2 samples");
  const int n = static_cast<int>(h.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int k = 0; k < n; ++k) {
    if (!(v[k] > 0.0))
      throw FitIllConditioned("fit_log_slope: nonpositive magnitude");
    const double lx = std::log2(h[k]), ly = std::log2(v[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-14)
    throw FitIllConditioned("fit_log_slope: degenerate abscissae");
  return (n * sxy - sx * sy) / denom;
}

}  // namespace minsurf
