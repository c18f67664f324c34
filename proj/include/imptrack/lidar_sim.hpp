#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imptrack/analytic_shape.hpp"
#include "imptrack/geometry.hpp"

namespace imptrack {

struct SensorSpec {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double azimuth_resolution = 0.4 * 3.14159265358979323846 / 180.0;  // radians
  int elevation_rows = 32;
  double elevation_min = -20.0 * 3.14159265358979323846 / 180.0;
  double elevation_max = 5.0 * 3.14159265358979323846 / 180.0;
  double range_noise = 0.02;  // meters, 1 sigma
  double dropout = 0.05;      // per-hit drop probability
  double max_range = 90.0;
  bool ground_plane = false;
  double ground_z = -1.8;     // ground height relative to the sensor

  void validate() const;
  double elevation_of_row(int row) const;
};

enum class MotionProfile : uint8_t { Straight, Turn, StopAndGo };
std::string to_string(MotionProfile p);
MotionProfile motion_profile_from_string(const std::string& s);

struct TrajectoryConfig {
  double center_z = -1.05;      // object center height relative to the sensor
  double min_start_range = 8.0;
  double max_start_range = 45.0;
  double min_speed = 1.5;       // m/s
  double max_speed = 6.0;
  double max_yaw_rate = 0.3;    // rad/s, turn profile
  double min_clearance = 6.0;   // minimum sensor distance along the path
  double frame_dt = 0.1;        // 10 Hz
};

/// Yaw follows the heading of motion; stationary frames keep the previous yaw.
std::vector<Pose> gen_trajectory(uint64_t seed, int n_frames, MotionProfile profile,
                                 const TrajectoryConfig& cfg = {});

/// Sphere-traced first hits against the posed, metric-scaled shape. Points are
/// in the world (sensor) frame.
PointCloud render_scan(const AnalyticShape& shape, const Pose& gt_pose, const BoxSize& size,
                       const SensorSpec& spec, uint64_t seed);

/// Drops points lower than `height_threshold` (world z).
PointCloud remove_ground(const PointCloud& cloud, double height_threshold);

struct Detection {
  Pose pose;
  double score = 0.9;
  bool operator==(const Detection&) const = default;
};

struct DetectionNoise {
  double sigma_xyz = 0.1;
  double sigma_yaw = 0.05;
  double fn_prob = 0.1;    // probability the true object is missed
  double fp_rate = 0.2;    // expected false positives per frame
  double fp_radius = 15.0;
};

std::vector<Detection> gen_detections(const Pose& gt_pose, const DetectionNoise& noise,
                                      uint64_t seed);

struct TrackletConfig {
  int n_frames = 100;
  MotionProfile profile = MotionProfile::Straight;
  bool random_profile = true;  // draw the profile from the seed
  double min_length = 3.8;     // metric object length range
  double max_length = 5.2;
  SensorSpec sensor;
  TrajectoryConfig trajectory;
  bool with_detections = true;
  DetectionNoise detection;
};

struct TrackletFrame {
  PointCloud points;  // world frame, float32-representable coordinates
  Pose gt_pose;
  std::vector<Detection> detections;
};

struct TrackletSequence {
  std::string name;
  uint64_t seed = 0;
  BoxSize size;
  AnalyticShape gt_shape;
  MotionProfile profile = MotionProfile::Straight;
  SensorSpec sensor;
  DetectionNoise detection;
  bool has_detections = false;
  int first_frame_points = 0;
  std::vector<TrackletFrame> frames;

  double mean_distance() const;
};

TrackletSequence gen_tracklet(const TrackletConfig& config, uint64_t seed);

/// Metric box of a family shape whose length is `length` meters.
BoxSize metric_box(const AnalyticShape& shape, double length);

}  // namespace imptrack
