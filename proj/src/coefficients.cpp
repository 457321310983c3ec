#include "minsurf/coefficients.hpp"

#include <cmath>

namespace minsurf {

CoefficientSet eval_coefficients(const MetricFamily& fam, double x, double y) {
  const Mat2 G0 = fam.g(x, y, 0.0);
  const Mat2 G1 = fam.ds_g(x, y, 0.0);
  const Mat2 G2 = fam.ds2_g(x, y, 0.0);
  const Mat2 G3 = fam.ds3_g(x, y, 0.0);
  const Mat2 G4 = fam.ds4(x, y, 0.0);

  CoefficientSet c;
  c.g = G0;
  const Mat2 N0 = G0.inverse();
  const Mat2 N1 = -(N0 * G1 * N0);
  const Mat2 N2 = -(N1 * G1 * N0 + N0 * G2 * N0 + N0 * G1 * N1);
  const Mat2 N3 = -(N2 * G1 * N0 + N0 * G1 * N2 + 2.0 * N1 * G2 * N0 +
                    2.0 * N0 * G2 * N1 + 2.0 * N1 * G1 * N1 + N0 * G3 * N0);
  c.k = N0;
  c.k1 = N1;
  c.k2 = N2;
  c.k3 = N3;

  c.h = (N0 * G1).trace();
  c.h1 = (N1 * G1 + N0 * G2).trace();
  c.h2 = (N2 * G1 + 2.0 * N1 * G2 + N0 * G3).trace();
  c.h3 = (N3 * G1 + 3.0 * N2 * G2 + 3.0 * N1 * G3 + N0 * G4).trace();

  // log d = (1/2) log det g, so (log d)^(l) = H^(l-1) / 2 for l >= 1, and the
  // derivatives of d = exp(log d) follow from Faà di Bruno on the cubic jet.
  const double l1 = c.h / 2.0, l2 = c.h1 / 2.0, l3 = c.h2 / 2.0;
  c.d = std::sqrt(G0.determinant());
  c.d1 = c.d * l1;
  c.d2 = c.d * (l2 + l1 * l1);
  c.d3 = c.d * (l3 + 3.0 * l1 * l2 + l1 * l1 * l1);

  c.q = c.h1 / 2.0;
  return c;
}

std::vector<CoefficientSet> eval_coefficients(const MetricFamily& fam, const Grid2D& grid) {
  std::vector<CoefficientSet> out;
  out.reserve(grid.size());
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) out.push_back(eval_coefficients(fam, grid.x(i), grid.y(j)));
  return out;
}

}  // namespace minsurf
