#pragma once

// Independent reference implementations used as test oracles.

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <utility>

#include "imptrack/common.hpp"
#include "imptrack/geometry.hpp"

namespace oracle {

inline bool inside_box(const imptrack::Pose& p, const imptrack::BoxSize& s, const Eigen::Vector3d& x) {
  const double dx = x.x() - p.tx, dy = x.y() - p.ty;
  const double c = std::cos(p.yaw), sn = std::sin(p.yaw);
  const double u = c * dx + sn * dy, v = -sn * dx + c * dy;
  return std::abs(u) <= s.l / 2 && std::abs(v) <= s.w / 2 && std::abs(x.z() - p.tz) <= s.h / 2;
}

/// Monte Carlo IoU: uniform samples in box A estimate |A and B| / |A|.
inline double monte_carlo_iou(const imptrack::Pose& pa, const imptrack::BoxSize& sa,
                              const imptrack::Pose& pb, const imptrack::BoxSize& sb, int n,
                              uint64_t seed) {
  imptrack::Rng rng(seed);
  const double c = std::cos(pa.yaw), sn = std::sin(pa.yaw);
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(-sa.l / 2, sa.l / 2), v = rng.uniform(-sa.w / 2, sa.w / 2);
    const double w = rng.uniform(-sa.h / 2, sa.h / 2);
    const Eigen::Vector3d x(pa.tx + c * u - sn * v, pa.ty + sn * u + c * v, pa.tz + w);
    if (inside_box(pb, sb, x)) ++hits;
  }
  const double inter = sa.volume() * hits / n;
  return inter / (sa.volume() + sb.volume() - inter);
}

/// Mean squared distance to the nearest target column, by exhaustive search.
inline double brute_chamfer(const Eigen::Matrix3Xd& pts, const Eigen::Matrix3Xd& target,
                            Eigen::Matrix3Xd* grads = nullptr) {
  double sum = 0.0;
  if (grads) grads->resize(3, pts.cols());
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
      const double d = (pts.col(i) - target.col(j)).squaredNorm();
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    sum += best;
    if (grads) grads->col(i) = 2.0 * (pts.col(i) - target.col(arg)) / double(pts.cols());
  }
  return sum / double(pts.cols());
}

/// max |a - b| / max(|a|, |b|, floor)
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
