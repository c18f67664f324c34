#pragma once

#include <Eigen/Core>

namespace imptrack {

/// Car-like procedural shape in normalized units: a rounded-box body with a
/// rounded-box cabin on top, joined by a polynomial smooth minimum.
/// The cabin is absent when cabin_length_frac == 0, which reduces the shape
/// to a single (rounded) box with half-extents (half_length, half_width,
/// half_height).
struct AnalyticShape {
  double half_length = 0.8;
  double half_width = 0.33;
  double half_height = 0.27;
  double cabin_length_frac = 0.5;   // cabin half-length / half_length
  double cabin_height_frac = 0.4;   // cabin height / total height
  double cabin_offset = -0.1;       // cabin center along x, in units of half_length
  double rounding = 0.04;
  double blend = 0.05;              // smooth-union width

  static constexpr double kCabinWidthFrac = 0.85;

  static AnalyticShape box(double a, double b, double c, double rounding = 0.0);

  Eigen::Vector3d half_extents() const { return {half_length, half_width, half_height}; }
  bool has_cabin() const { return cabin_length_frac > 0.0; }
  /// Throws std::invalid_argument when the parameters leave the family.
  void validate() const;
  /// Uniformly rescales lengths (including rounding and blend).
  AnalyticShape scaled(double factor) const;
  bool operator==(const AnalyticShape&) const = default;
};

double rounded_box_sdf(const Eigen::Vector3d& p, const Eigen::Vector3d& center,
                       const Eigen::Vector3d& half_extents, double radius);
double smooth_min(double a, double b, double k);

double analytic_sdf(const AnalyticShape& shape, const Eigen::Vector3d& x);
/// Central-difference gradient of analytic_sdf.
Eigen::Vector3d analytic_sdf_gradient(const AnalyticShape& shape, const Eigen::Vector3d& x,
                                      double h = 1e-6);
/// Newton projection onto the zero level set; returns the projected point.
Eigen::Vector3d project_to_surface(const AnalyticShape& shape, Eigen::Vector3d x,
                                   double tol = 1e-12, int max_iter = 100);

}  // namespace imptrack
