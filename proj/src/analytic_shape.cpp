#include "imptrack/analytic_shape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace imptrack {

AnalyticShape AnalyticShape::box(double a, double b, double c, double rounding) {
  AnalyticShape s;
  s.half_length = a;
  s.half_width = b;
  s.half_height = c;
  s.cabin_length_frac = 0.0;
  s.cabin_height_frac = 0.0;
  s.cabin_offset = 0.0;
  s.rounding = rounding;
  return s;
}

void AnalyticShape::validate() const {
  if (!(half_length > 0 && half_width > 0 && half_height > 0))
    throw std::invalid_argument("AnalyticShape: half extents must be positive");
  if (rounding < 0 || blend < 0) throw std::invalid_argument("AnalyticShape: negative radius");
  if (has_cabin()) {
    if (cabin_length_frac > 1.0 || !(cabin_height_frac > 0.0 && cabin_height_frac < 0.5))
      throw std::invalid_argument("AnalyticShape: cabin fractions out of range");
    if (std::abs(cabin_offset) >= cabin_length_frac ||
        std::abs(cabin_offset) + cabin_length_frac > 1.0)
      throw std::invalid_argument("AnalyticShape: cabin offset out of range");
    const double cabin_min = std::min({half_length * cabin_length_frac,
                                       half_width * kCabinWidthFrac,
                                       half_height * cabin_height_frac});
    const double body_min = std::min({half_length, half_width,
                                      half_height * (1.0 - cabin_height_frac)});
    if (rounding > cabin_min || rounding > body_min)
      throw std::invalid_argument("AnalyticShape: rounding exceeds part size");
  } else if (rounding > std::min({half_length, half_width, half_height})) {
    throw std::invalid_argument("AnalyticShape: rounding exceeds box size");
  }
}

AnalyticShape AnalyticShape::scaled(double factor) const {
  AnalyticShape s = *this;
  s.half_length *= factor;
  s.half_width *= factor;
  s.half_height *= factor;
  s.rounding *= factor;
  s.blend *= factor;
  return s;
}

double rounded_box_sdf(const Eigen::Vector3d& p, const Eigen::Vector3d& center,
                       const Eigen::Vector3d& half_extents, double radius) {
  const Eigen::Vector3d q =
      (p - center).cwiseAbs() - (half_extents - Eigen::Vector3d::Constant(radius));
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0) - radius;
}

double smooth_min(double a, double b, double k) {
  if (k <= 0.0) return std::min(a, b);
  const double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
  return b + (a - b) * h - k * h * (1.0 - h);
}

double analytic_sdf(const AnalyticShape& s, const Eigen::Vector3d& x) {
  if (!s.has_cabin()) {
    return rounded_box_sdf(x, Eigen::Vector3d::Zero(), s.half_extents(), s.rounding);
  }
  const double chf = s.cabin_height_frac;
  const Eigen::Vector3d body_half(s.half_length, s.half_width, s.half_height * (1.0 - chf));
  const Eigen::Vector3d body_center(0.0, 0.0, -s.half_height * chf);
  const Eigen::Vector3d cabin_half(s.half_length * s.cabin_length_frac,
                                   s.half_width * AnalyticShape::kCabinWidthFrac,
                                   s.half_height * chf);
  const Eigen::Vector3d cabin_center(s.cabin_offset * s.half_length, 0.0,
                                     s.half_height * (1.0 - chf));
  const double body = rounded_box_sdf(x, body_center, body_half, s.rounding);
  const double cabin = rounded_box_sdf(x, cabin_center, cabin_half, s.rounding);
  return smooth_min(body, cabin, s.blend);
}

Eigen::Vector3d analytic_sdf_gradient(const AnalyticShape& shape, const Eigen::Vector3d& x,
                                      double h) {
  Eigen::Vector3d g;
  for (int i = 0; i < 3; ++i) {
    Eigen::Vector3d a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (analytic_sdf(shape, a) - analytic_sdf(shape, b)) / (2.0 * h);
  }
  return g;
}

Eigen::Vector3d project_to_surface(const AnalyticShape& shape, Eigen::Vector3d x,
                                   double tol, int max_iter) {
  for (int it = 0; it < max_iter; ++it) {
    const double d = analytic_sdf(shape, x);
    if (std::abs(d) <= tol) break;
    const Eigen::Vector3d g = analytic_sdf_gradient(shape, x);
    const double g2 = g.squaredNorm();
    if (g2 < 1e-12) break;
    x -= d * g / g2;
  }
  return x;
}

}  // namespace imptrack
