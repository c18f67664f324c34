#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "imptrack/geometry.hpp"
#include "imptrack/sdf_net.hpp"

namespace imptrack {

struct TriMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  bool operator==(const TriMesh&) const = default;
};

struct GridBounds {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(-1.1);
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(1.1);
};

/// Writes field values for the columns of `points` into `values`.
using ScalarField = std::function<void(const Eigen::Matrix3Xd& points, Eigen::VectorXd& values)>;

/// 256-case marching cubes over a resolution^3 sample grid, zero iso level,
/// negative inside. Vertices on shared grid edges are shared, so a closed
/// level set gives a closed mesh. Sets *no_surface when the field has no sign
/// change (the mesh is then empty).
TriMesh marching_cubes(const ScalarField& field, int resolution, const GridBounds& bounds = {},
                       bool* no_surface = nullptr);
TriMesh marching_cubes(const DecoderParams& params, const ShapeCode& z, int resolution,
                       const GridBounds& bounds = {}, bool* no_surface = nullptr);

/// Triangle list (as corner-edge indices) for one cube configuration; corner
/// bit i of `config` set means corner i is inside. Exposed for tests.
const std::vector<std::array<int, 3>>& marching_cubes_case(int config);

/// Area-weighted uniform samples on the mesh surface.
PointCloud sample_surface(const TriMesh& mesh, int n, uint64_t seed,
                          std::vector<uint32_t>* triangle_ids = nullptr);

struct ShapeMetricOptions {
  int resolution = 96;
  int surface_samples = 30000;
  uint64_t seed = 0;
  double recall_threshold = 0.2;  // meters
  GridBounds bounds;
};

struct ShapeMetrics {
  double acd = 0.0;     // squared meters
  double recall = 0.0;  // fraction in [0, 1]
  bool no_surface = false;
};

/// ACD and recall of canonical metric ground-truth points against the
/// decoder's zero level set for code z, reported in metric units.
ShapeMetrics shape_metrics(const PointCloud& gt_points, const DecoderParams& params,
                           const ShapeCode& z, const BoxSize& size,
                           const ShapeMetricOptions& options = {});
double acd(const PointCloud& gt_points, const DecoderParams& params, const ShapeCode& z,
           const BoxSize& size, const ShapeMetricOptions& options = {});
/// Mean over points of the squared decoder value converted to meters.
double acd_decoder_shortcut(const PointCloud& gt_points, const DecoderParams& params,
                            const ShapeCode& z, const BoxSize& size);

/// Mean squared distance from each gt point to its nearest predicted point.
double acd_points(const PointCloud& gt_points, const PointCloud& pred_points);
double recall_at(const PointCloud& gt_points, const PointCloud& pred_points, double t);

void write_ply(const std::string& path, const TriMesh& mesh);
TriMesh read_ply(const std::string& path);
void write_obj(const std::string& path, const TriMesh& mesh);

/// Undirected edge -> number of incident triangles.
bool is_watertight(const TriMesh& mesh);

}  // namespace imptrack
