#include "minsurf/metric.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace minsurf {

Mat2 MetricFamily::ds4(double x, double y, double s) const {
  if (ds4_g) return ds4_g(x, y, s);
  // Central difference of the third derivative; the step is far below every
  // tolerance the coefficient layer is tested at.
  const double eps = 1e-4;
  return (ds3_g(x, y, s + eps) - ds3_g(x, y, s - eps)) / (2.0 * eps);
}

void MetricFamily::validate_spd(const Grid2D& grid, double smax) const {
  for (double s : {-smax, 0.0, smax})
    for (int j = 0; j < grid.ny; ++j)
      for (int i = 0; i < grid.nx; ++i) {
        const Mat2 m = g(grid.x(i), grid.y(j), s);
        if (!(m(0, 0) > 0.0) || !(m.determinant() > 0.0) ||
            std::abs(m(0, 1) - m(1, 0)) > 1e-12) {
          std::ostringstream os;
          os << "metric family '" << name << "' is not symmetric positive definite at ("
             << grid.x(i) << ", " << grid.y(j) << ", s=" << s << ")";
          throw NotSPD(os.str());
        }
      }
}

void MetricFamily::require_minimal(const Grid2D& grid, double tol) const {
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) {
      const double x = grid.x(i), y = grid.y(j);
      const double trace = (g(x, y, 0.0).inverse() * ds_g(x, y, 0.0)).trace();
      if (std::abs(trace) > tol) {
        std::ostringstream os;
        os << "metric family '" << name << "' has nonminimal central slice: tr(g^-1 ds g) = "
           << trace << " at (" << x << ", " << y << ")";
        throw NonMinimal(os.str());
      }
    }
}

namespace {
const Mat2 kId = Mat2::Identity();
const Mat2 kZero = Mat2::Zero();
}  // namespace

MetricFamily flat_family() {
  MetricFamily f;
  f.name = "flat";
  f.g = [](double, double, double) { return kId; };
  f.ds_g = [](double, double, double) { return kZero; };
  f.ds2_g = f.ds_g;
  f.ds3_g = f.ds_g;
  f.ds4_g = f.ds_g;
  return f;
}

MetricFamily gamma_family(double gamma) {
  MetricFamily f;
  f.name = "gamma";
  f.g = [gamma](double, double, double s) { return Mat2((1.0 + gamma * s * s) * kId); };
  f.ds_g = [gamma](double, double, double s) { return Mat2(2.0 * gamma * s * kId); };
  f.ds2_g = [gamma](double, double, double) { return Mat2(2.0 * gamma * kId); };
  f.ds3_g = [](double, double, double) { return kZero; };
  f.ds4_g = f.ds3_g;
  return f;
}

MetricFamily cubic_family(double mu) {
  MetricFamily f;
  f.name = "cubic";
  f.g = [mu](double, double, double s) { return Mat2((1.0 + mu * s * s * s) * kId); };
  f.ds_g = [mu](double, double, double s) { return Mat2(3.0 * mu * s * s * kId); };
  f.ds2_g = [mu](double, double, double s) { return Mat2(6.0 * mu * s * kId); };
  f.ds3_g = [mu](double, double, double) { return Mat2(6.0 * mu * kId); };
  f.ds4_g = [](double, double, double) { return kZero; };
  return f;
}

MetricFamily shear_family(double b, double e, const RadialBump& chi) {
  Mat2 B;
  B << b, e, e, -b;
  MetricFamily f;
  f.name = "shear";
  f.g = [chi, B](double x, double y, double s) { return Mat2(kId + s * chi(x, y) * B); };
  f.ds_g = [chi, B](double x, double y, double) { return Mat2(chi(x, y) * B); };
  f.ds2_g = [](double, double, double) { return kZero; };
  f.ds3_g = f.ds2_g;
  f.ds4_g = f.ds2_g;
  return f;
}

MetricFamily quadratic_height_family(std::function<Mat2(double, double)> P,
                                     std::function<Mat2(double, double)> Q,
                                     std::string name) {
  MetricFamily f;
  f.name = std::move(name);
  f.g = [P, Q](double x, double y, double s) {
    return Mat2(kId + s * P(x, y) + (s * s) * Q(x, y));
  };
  f.ds_g = [P, Q](double x, double y, double s) {
    return Mat2(P(x, y) + 2.0 * s * Q(x, y));
  };
  f.ds2_g = [Q](double x, double y, double) { return Mat2(2.0 * Q(x, y)); };
  f.ds3_g = [](double, double, double) { return kZero; };
  f.ds4_g = f.ds3_g;
  return f;
}

MetricFamily polynomial_family(const Mat2& G0, const Mat2& G1, const Mat2& G2,
                               const Mat2& G3, const Mat2& G4) {
  MetricFamily f;
  f.name = "polynomial";
  f.g = [=](double, double, double s) {
    return Mat2(G0 + s * G1 + (s * s / 2.0) * G2 + (s * s * s / 6.0) * G3 +
                (s * s * s * s / 24.0) * G4);
  };
  f.ds_g = [=](double, double, double s) {
    return Mat2(G1 + s * G2 + (s * s / 2.0) * G3 + (s * s * s / 6.0) * G4);
  };
  f.ds2_g = [=](double, double, double s) {
    return Mat2(G2 + s * G3 + (s * s / 2.0) * G4);
  };
  f.ds3_g = [=](double, double, double s) { return Mat2(G3 + s * G4); };
  f.ds4_g = [=](double, double, double) { return G4; };
  return f;
}

MetricFamily conformal_scale(const MetricFamily& base,
                             std::function<double(double, double)> c,
                             std::string name) {
  MetricFamily f;
  f.name = name.empty() ? base.name + "_conformal" : std::move(name);
  auto scale = [c](const MetricFamily::MatrixFn& fn) -> MetricFamily::MatrixFn {
    if (!fn) return nullptr;
    return [c, fn](double x, double y, double s) { return Mat2(c(x, y) * fn(x, y, s)); };
  };
  f.g = scale(base.g);
  f.ds_g = scale(base.ds_g);
  f.ds2_g = scale(base.ds2_g);
  f.ds3_g = scale(base.ds3_g);
  f.ds4_g = scale(base.ds4_g);
  return f;
}

}  // namespace minsurf
