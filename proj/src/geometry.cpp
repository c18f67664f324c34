#include "imptrack/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "imptrack/common.hpp"
#include "imptrack/nn_index.hpp"

namespace imptrack {

Pose Pose::make(double tx, double ty, double tz, double yaw) {
  return Pose{tx, ty, tz, wrap_angle(yaw)};
}

bool Pose::finite() const {
  return std::isfinite(tx) && std::isfinite(ty) && std::isfinite(tz) &&
         std::isfinite(yaw);
}

Eigen::Vector3d world_to_canonical(const Pose& pose, const Eigen::Vector3d& p) {
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  const double dx = p.x() - pose.tx;
  const double dy = p.y() - pose.ty;
  return {c * dx + s * dy, -s * dx + c * dy, p.z() - pose.tz};
}

Eigen::Vector3d canonical_to_world(const Pose& pose, const Eigen::Vector3d& q) {
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  return {c * q.x() - s * q.y() + pose.tx, s * q.x() + c * q.y() + pose.ty,
          q.z() + pose.tz};
}

Eigen::Matrix3Xd world_to_canonical(const Pose& pose, const Eigen::Matrix3Xd& pts) {
  Eigen::Matrix3Xd out(3, pts.cols());
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    out.col(i) = world_to_canonical(pose, Eigen::Vector3d(pts.col(i)));
  }
  return out;
}

Eigen::Matrix3Xd canonical_to_world(const Pose& pose, const Eigen::Matrix3Xd& pts) {
  Eigen::Matrix3Xd out(3, pts.cols());
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    out.col(i) = canonical_to_world(pose, Eigen::Vector3d(pts.col(i)));
  }
  return out;
}

double normalization_scale(const BoxSize& size) {
  return 2.0 / (std::sqrt(size.h * size.h + size.w * size.w + size.l * size.l) * 1.03);
}

Eigen::Vector3d normalize_canonical(const BoxSize& size, const Eigen::Vector3d& p) {
  return p * normalization_scale(size);
}

std::vector<Eigen::Index> crop_indices(const PointCloud& frame, const Pose& pose,
                                       const BoxSize& size, double dilation) {
  if (dilation < 1.0) throw std::invalid_argument("crop dilation must be >= 1");
  const double hx = dilation * size.l / 2.0;
  const double hy = dilation * size.w / 2.0;
  const double hz = dilation * size.h / 2.0;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    const Eigen::Vector3d q = world_to_canonical(pose, Eigen::Vector3d(frame.points.col(i)));
    if (std::abs(q.x()) <= hx && std::abs(q.y()) <= hy && std::abs(q.z()) <= hz) {
      kept.push_back(i);
    }
  }
  return kept;
}

PointCloud crop_points(const PointCloud& frame, const Pose& pose, const BoxSize& size,
                       double dilation) {
  const auto kept = crop_indices(frame, pose, size, dilation);
  Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(kept.size()));
  for (size_t k = 0; k < kept.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) =
        world_to_canonical(pose, Eigen::Vector3d(frame.points.col(kept[k])));
  }
  return PointCloud(std::move(out), Frame::Canonical);
}

Jacobian3x4 pose_jacobian(const Pose& pose, const Eigen::Vector3d& p) {
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  const Eigen::Vector3d q = world_to_canonical(pose, p);
  Jacobian3x4 J;
  // columns: tx, ty, tz, yaw
  J << -c, -s, 0.0, q.y(),
        s, -c, 0.0, -q.x(),
       0.0, 0.0, -1.0, 0.0;
  return J;
}

std::vector<Eigen::Vector2d> bev_corners(const Pose& pose, const BoxSize& size) {
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  const double hl = size.l / 2.0;
  const double hw = size.w / 2.0;
  const double local[4][2] = {{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}};
  std::vector<Eigen::Vector2d> out;
  out.reserve(4);
  for (const auto& l : local) {
    out.emplace_back(pose.tx + c * l[0] - s * l[1], pose.ty + s * l[0] + c * l[1]);
  }
  return out;
}

namespace {

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double a = 0.0;
  for (size_t i = 0; i < poly.size(); ++i) {
    a += cross2(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * a;
}

}  // namespace

// Sutherland-Hodgman: clip `subject` by each edge of the convex `clip`.
double convex_intersection_area(const std::vector<Eigen::Vector2d>& subject,
                                const std::vector<Eigen::Vector2d>& clip) {
  std::vector<Eigen::Vector2d> output = subject;
  for (size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Eigen::Vector2d a = clip[e];
    const Eigen::Vector2d b = clip[(e + 1) % clip.size()];
    const Eigen::Vector2d edge = b - a;
    auto side = [&](const Eigen::Vector2d& p) { return cross2(edge, p - a); };
    std::vector<Eigen::Vector2d> input;
    input.swap(output);
    for (size_t i = 0; i < input.size(); ++i) {
      const Eigen::Vector2d& cur = input[i];
      const Eigen::Vector2d& prev = input[(i + input.size() - 1) % input.size()];
      const double sc = side(cur);
      const double sp = side(prev);
      if (sc >= 0.0) {
        if (sp < 0.0) output.push_back(prev + (cur - prev) * (sp / (sp - sc)));
        output.push_back(cur);
      } else if (sp >= 0.0) {
        output.push_back(prev + (cur - prev) * (sp / (sp - sc)));
      }
    }
  }
  if (output.size() < 3) return 0.0;
  return std::max(0.0, polygon_area(output));
}

double box_iou_3d(const Pose& pose_a, const BoxSize& size_a, const Pose& pose_b,
                  const BoxSize& size_b) {
  const double zlo = std::max(pose_a.tz - size_a.h / 2.0, pose_b.tz - size_b.h / 2.0);
  const double zhi = std::min(pose_a.tz + size_a.h / 2.0, pose_b.tz + size_b.h / 2.0);
  const double dz = zhi - zlo;
  if (dz <= 0.0) return 0.0;
  const double area = convex_intersection_area(bev_corners(pose_a, size_a),
                                               bev_corners(pose_b, size_b));
  const double inter = area * dz;
  if (inter <= 0.0) return 0.0;
  const double uni = size_a.volume() + size_b.volume() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

ChamferResult chamfer_single_side(const PointCloud& pts, const NNIndex& index) {
  if (index.empty()) throw std::invalid_argument("chamfer_single_side: empty index");
  ChamferResult out;
  const Eigen::Index n = pts.size();
  out.grads.resize(3, n);
  out.nearest.resize(n);
  if (n == 0) return out;
  double sum = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d x = pts.points.col(i);
    const auto [j, d2] = index.nearest(x);
    out.nearest[i] = j;
    sum += d2;
    out.grads.col(i) = 2.0 * inv_n * (x - index.points().col(j));
  }
  out.loss = sum * inv_n;
  return out;
}

namespace {

struct CellKey {
  int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  size_t operator()(const CellKey& k) const {
    uint64_t h = static_cast<uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<size_t>(h);
  }
};

}  // namespace

PointCloud voxel_downsample(const PointCloud& pts, double voxel) {
  if (!(voxel > 0.0)) throw std::invalid_argument("voxel size must be positive");
  std::unordered_map<CellKey, size_t, CellHash> slot;
  std::vector<Eigen::Vector3d> sums;
  std::vector<int> counts;
  for (Eigen::Index i = 0; i < pts.size(); ++i) {
    const Eigen::Vector3d p = pts.points.col(i);
    const CellKey key{static_cast<int64_t>(std::floor(p.x() / voxel)),
                      static_cast<int64_t>(std::floor(p.y() / voxel)),
                      static_cast<int64_t>(std::floor(p.z() / voxel))};
    auto [it, inserted] = slot.try_emplace(key, sums.size());
    if (inserted) {
      sums.push_back(p);
      counts.push_back(1);
    } else {
      sums[it->second] += p;
      counts[it->second] += 1;
    }
  }
  Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(sums.size()));
  for (size_t k = 0; k < sums.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = counts[k] == 1 ? sums[k] : sums[k] / counts[k];
  }
  return PointCloud(std::move(out), pts.frame);
}

}  // namespace imptrack
