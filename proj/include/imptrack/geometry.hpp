#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace imptrack {

class NNIndex;

/// Object pose restricted to a translation and a rotation about +z.
/// yaw is kept in (-pi, pi].
struct Pose {
  double tx = 0.0;
  double ty = 0.0;
  double tz = 0.0;
  double yaw = 0.0;

  static Pose make(double tx, double ty, double tz, double yaw);
  Eigen::Vector3d translation() const { return {tx, ty, tz}; }
  Eigen::Vector4d as_vector() const { return {tx, ty, tz, yaw}; }
  static Pose from_vector(const Eigen::Vector4d& v) {
    return make(v[0], v[1], v[2], v[3]);
  }
  bool finite() const;
  bool operator==(const Pose&) const = default;
};

/// Object extents in meters: height (z), width (y), length (x).
struct BoxSize {
  double h = 1.0;
  double w = 1.0;
  double l = 1.0;

  bool valid() const { return h > 0.0 && w > 0.0 && l > 0.0; }
  double volume() const { return h * w * l; }
  bool operator==(const BoxSize&) const = default;
};

enum class Frame : uint8_t { World, Canonical, Normalized };

struct PointCloud {
  Eigen::Matrix3Xd points;
  Frame frame = Frame::World;

  PointCloud() = default;
  PointCloud(Eigen::Matrix3Xd pts, Frame f) : points(std::move(pts)), frame(f) {}

  Eigen::Index size() const { return points.cols(); }
  bool empty() const { return points.cols() == 0; }
};

/// d(canonical point) / d(tx, ty, tz, yaw)
using Jacobian3x4 = Eigen::Matrix<double, 3, 4>;

Eigen::Vector3d world_to_canonical(const Pose& pose, const Eigen::Vector3d& p);
Eigen::Vector3d canonical_to_world(const Pose& pose, const Eigen::Vector3d& q);
Eigen::Matrix3Xd world_to_canonical(const Pose& pose, const Eigen::Matrix3Xd& pts);
Eigen::Matrix3Xd canonical_to_world(const Pose& pose, const Eigen::Matrix3Xd& pts);

/// Scale that maps the box (with a 3 % margin) into the unit sphere.
double normalization_scale(const BoxSize& size);
Eigen::Vector3d normalize_canonical(const BoxSize& size, const Eigen::Vector3d& p);

std::vector<Eigen::Index> crop_indices(const PointCloud& frame, const Pose& pose,
                                       const BoxSize& size, double dilation);
/// Points of a world frame that fall inside the (dilated) box, returned in
/// the canonical frame of `pose`, input order preserved.
PointCloud crop_points(const PointCloud& frame, const Pose& pose,
                       const BoxSize& size, double dilation);

Jacobian3x4 pose_jacobian(const Pose& pose, const Eigen::Vector3d& p);

double box_iou_3d(const Pose& pose_a, const BoxSize& size_a, const Pose& pose_b,
                  const BoxSize& size_b);

/// Area of the intersection of two convex polygons given counter-clockwise.
double convex_intersection_area(const std::vector<Eigen::Vector2d>& subject,
                                const std::vector<Eigen::Vector2d>& clip);

std::vector<Eigen::Vector2d> bev_corners(const Pose& pose, const BoxSize& size);

struct ChamferResult {
  double loss = 0.0;
  Eigen::Matrix3Xd grads;  // d loss / d point
  std::vector<Eigen::Index> nearest;
};

/// Mean squared distance from each point to its nearest index point, with
/// the gradient taken at fixed correspondences.
ChamferResult chamfer_single_side(const PointCloud& pts, const NNIndex& index);

/// One centroid per occupied voxel, in order of first occupancy.
PointCloud voxel_downsample(const PointCloud& pts, double voxel);

}  // namespace imptrack
