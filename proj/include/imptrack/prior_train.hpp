#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "imptrack/analytic_shape.hpp"
#include "imptrack/geometry.hpp"
#include "imptrack/sdf_net.hpp"

namespace imptrack {

/// Parameter ranges of the procedural car family. Proportions are drawn
/// relative to a unit half-length, then the whole shape is rescaled so the
/// bounding-box half diagonal is 1/1.03 (the box corners of a normalized
/// object).
struct FamilyBounds {
  double width_ratio[2] = {0.36, 0.46};    // half_width / half_length
  double height_ratio[2] = {0.27, 0.38};   // half_height / half_length
  double cabin_length_frac[2] = {0.40, 0.65};
  double cabin_height_frac[2] = {0.30, 0.45};
  double cabin_offset[2] = {-0.25, 0.10};
  double rounding[2] = {0.02, 0.05};       // normalized units, after rescale
  double blend = 0.05;
};

inline constexpr double kNormalizedHalfDiagonal = 1.0 / 1.03;

std::vector<AnalyticShape> sample_shape_family(uint64_t seed, int n_shapes,
                                               const FamilyBounds& bounds = {});
bool within_bounds(const AnalyticShape& shape, const FamilyBounds& bounds = {});

struct TrainSample {
  int shape_id = 0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  double target = 0.0;
};

enum class SampleKind : uint8_t { Surface, NearFine, NearCoarse, Uniform };

struct SdfSampling {
  // Counts are in parts of ten: 1 exact-surface : 8 offset : 1 uniform, with
  // the offset samples split evenly between the two sigmas.
  double sigma_fine = 0.01;
  double sigma_coarse = 0.05;
  double uniform_radius = 1.25;
};

/// Surface points, roughly area-distributed, exactly on the zero level set.
std::vector<Eigen::Vector3d> sample_surface(const AnalyticShape& shape, int n, uint64_t seed);

std::vector<TrainSample> sample_sdf_pairs(const AnalyticShape& shape, int n, uint64_t seed,
                                          int shape_id = 0, const SdfSampling& cfg = {},
                                          std::vector<SampleKind>* kinds = nullptr);

/// First hits of a grid of rays cast from `sensor` (normalized units) toward
/// the shape, restricted to the angular extent of its bounding sphere.
PointCloud simulate_partial_scan(const AnalyticShape& shape, const Eigen::Vector3d& sensor,
                                 int azimuth_rays = 64, int elevation_rays = 32);

/// Viewpoints at metric distance in [min_range, max_range], expressed in
/// normalized units through `metric_to_normalized`.
std::vector<Eigen::Vector3d> sample_scan_viewpoints(uint64_t seed, int count, double min_range,
                                                    double max_range,
                                                    double metric_to_normalized);

struct CodeTable {
  std::vector<ShapeCode> codes;  // index = shape id
  bool empty() const { return codes.empty(); }
};

struct TrainConfig {
  uint64_t seed = 7;
  DecoderDims dims;
  int samples_per_shape = 3072;
  int scan_views = 24;
  int scan_points_per_shape = 512;
  double scan_min_range = 4.0;
  double scan_max_range = 10.0;
  double nominal_diagonal = 5.0;  // meters; converts scan ranges to normalized units
  int epochs = 200;
  int batch_size = 128;
  double learning_rate = 1e-4;
  double code_reg = 1e-4;
  double code_init_sigma = 0.01;
  double delta = 0.05;
  SdfSampling sampling;
};

struct TrainResult {
  DecoderParams params;
  CodeTable codes;
  std::vector<double> loss_history;  // one mean loss per epoch
};

/// Builds the full supervision set for `shapes` (SDF pairs and scan hits).
std::vector<TrainSample> build_training_set(const std::vector<AnalyticShape>& shapes,
                                            const TrainConfig& config);

TrainResult train_auto_decoder(const std::vector<AnalyticShape>& shapes,
                               const TrainConfig& config);
TrainResult train_auto_decoder(const std::vector<TrainSample>& samples, int n_shapes,
                               const TrainConfig& config);

ShapeCode mean_code(const CodeTable& table);

}  // namespace imptrack
