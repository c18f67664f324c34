#include "imptrack/lidar_sim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "imptrack/common.hpp"
#include "imptrack/prior_train.hpp"

namespace imptrack {

void SensorSpec::validate() const {
  if (!(azimuth_resolution > 0.0) || elevation_rows < 1 || !(elevation_max >= elevation_min))
    throw ConfigError("SensorSpec: resolutions must be positive");
  if (range_noise < 0.0) throw ConfigError("SensorSpec: range noise must be >= 0");
  if (dropout < 0.0 || dropout > 1.0) throw ConfigError("SensorSpec: dropout must be in [0,1]");
}

double SensorSpec::elevation_of_row(int row) const {
  if (elevation_rows == 1) return elevation_min;
  return elevation_min + (elevation_max - elevation_min) * row / (elevation_rows - 1);
}

std::string to_string(MotionProfile p) {
  switch (p) {
    case MotionProfile::Straight: return "straight";
    case MotionProfile::Turn: return "turn";
    case MotionProfile::StopAndGo: return "stop-and-go";
  }
  return "straight";
}

MotionProfile motion_profile_from_string(const std::string& s) {
  if (s == "straight") return MotionProfile::Straight;
  if (s == "turn") return MotionProfile::Turn;
  if (s == "stop-and-go") return MotionProfile::StopAndGo;
  throw ConfigError("unknown motion profile '" + s + "'");
}

std::vector<Pose> gen_trajectory(uint64_t seed, int n_frames, MotionProfile profile,
                                 const TrajectoryConfig& cfg) {
  if (n_frames < 2) throw std::invalid_argument("gen_trajectory: n_frames must be >= 2");
  constexpr double kPi = std::numbers::pi;
  Rng rng(seed);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double r0 = rng.uniform(cfg.min_start_range, cfg.max_start_range);
    const double bearing = rng.uniform(-kPi, kPi);
    double heading = rng.uniform(-kPi, kPi);
    const double speed = rng.uniform(cfg.min_speed, cfg.max_speed);
    const double yaw_rate =
        (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, cfg.max_yaw_rate);
    const double period = rng.uniform(4.0, 8.0);
    const double phase = rng.uniform(0.0, 2.0 * kPi);

    std::vector<Eigen::Vector2d> xy(n_frames);
    std::vector<double> step_heading(n_frames - 1);
    std::vector<bool> moving(n_frames - 1);
    xy[0] = r0 * Eigen::Vector2d(std::cos(bearing), std::sin(bearing));
    for (int k = 0; k + 1 < n_frames; ++k) {
      double v = speed;
      if (profile == MotionProfile::StopAndGo) {
        v = speed * std::clamp(1.5 * std::sin(2.0 * kPi * k * cfg.frame_dt / period + phase),
                               0.0, 1.0);
      }
      xy[k + 1] = xy[k] + v * cfg.frame_dt * Eigen::Vector2d(std::cos(heading), std::sin(heading));
      step_heading[k] = heading;
      moving[k] = v > 0.0;
      if (profile == MotionProfile::Turn) heading += yaw_rate * cfg.frame_dt;
    }
    bool ok = true;
    for (const auto& p : xy) {
      const double r = p.norm();
      if (r < cfg.min_clearance || r > cfg.max_start_range + 25.0) ok = false;
    }
    if (!ok) continue;

    std::vector<Pose> poses(n_frames);
    // first moving step sets the initial yaw
    double yaw = wrap_angle(step_heading[0]);
    for (int k = 0; k + 1 < n_frames; ++k)
      if (moving[k]) {
        yaw = wrap_angle(step_heading[k]);
        break;
      }
    for (int k = 0; k < n_frames; ++k) {
      const int step = std::min(k, n_frames - 2);
      if (moving[step]) yaw = wrap_angle(step_heading[step]);
      poses[k] = Pose::make(xy[k].x(), xy[k].y(), cfg.center_z, yaw);
    }
    return poses;
  }
  throw DataError("gen_trajectory: could not place a trajectory with the requested clearance");
}

PointCloud render_scan(const AnalyticShape& shape, const Pose& gt_pose, const BoxSize& size,
                       const SensorSpec& spec, uint64_t seed) {
  spec.validate();
  const double scale = normalization_scale(size);
  auto metric_sdf = [&](const Eigen::Vector3d& p) {
    return analytic_sdf(shape, scale * world_to_canonical(gt_pose, p)) / scale;
  };
  const Eigen::Vector3d center = gt_pose.translation() - spec.origin;
  const double dist = center.norm();
  const double radius = shape.half_extents().norm() / scale + 0.05;
  if (dist <= radius || metric_sdf(spec.origin) <= 0.0)
    throw std::invalid_argument("render_scan: sensor inside the object's bounding sphere");

  const double half = std::asin(std::min(1.0, radius / dist));
  const double az_c = std::atan2(center.y(), center.x());
  const double el_c = std::asin(std::clamp(center.z() / dist, -1.0, 1.0));
  const double res = spec.azimuth_resolution;
  const auto k_lo = static_cast<long>(std::floor((az_c - half + std::numbers::pi) / res));
  const auto k_hi = static_cast<long>(std::ceil((az_c + half + std::numbers::pi) / res));

  Rng rng(seed);
  std::vector<Eigen::Vector3d> hits;
  for (int row = 0; row < spec.elevation_rows; ++row) {
    const double el = spec.elevation_of_row(row);
    if (el < el_c - half || el > el_c + half) continue;
    for (long k = k_lo; k <= k_hi; ++k) {
      const double az = wrap_angle(static_cast<double>(k) * res - std::numbers::pi);
      const Eigen::Vector3d dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                std::sin(el));
      double t = std::max(0.0, dist - radius);
      const double t_far = std::min(dist + radius, spec.max_range);
      double hit_t = -1.0;
      for (int step = 0; step < 4000 && t <= t_far; ++step) {
        const double d = metric_sdf(spec.origin + t * dir);
        if (d < 1e-6) {
          hit_t = t;
          break;
        }
        t += d;
      }
      if (hit_t < 0.0 && spec.ground_plane && dir.z() < 0.0) {
        const double tg = (spec.ground_z - spec.origin.z()) / dir.z();
        if (tg <= spec.max_range) hit_t = tg;
      }
      if (hit_t < 0.0) continue;
      const double noise = rng.normal(0.0, spec.range_noise);
      const bool dropped = rng.bernoulli(spec.dropout);
      if (dropped) continue;
      hits.push_back(spec.origin + (hit_t + noise) * dir);
    }
  }
  Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(hits.size()));
  for (size_t i = 0; i < hits.size(); ++i) {
    // stored as float32 on disk; round here so in-memory and file data agree
    pts.col(static_cast<Eigen::Index>(i)) = hits[i].cast<float>().cast<double>();
  }
  return PointCloud(std::move(pts), Frame::World);
}

PointCloud remove_ground(const PointCloud& cloud, double height_threshold) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    if (cloud.points(2, i) > height_threshold) keep.push_back(i);
  }
  Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(keep.size()));
  for (size_t k = 0; k < keep.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = cloud.points.col(keep[k]);
  return PointCloud(std::move(out), cloud.frame);
}

std::vector<Detection> gen_detections(const Pose& gt_pose, const DetectionNoise& noise,
                                      uint64_t seed) {
  if (noise.fn_prob < 0.0 || noise.fn_prob > 1.0 || noise.fp_rate < 0.0)
    throw std::invalid_argument("gen_detections: invalid probabilities");
  Rng rng(seed);
  std::vector<Detection> out;
  if (!rng.bernoulli(noise.fn_prob)) {
    const double dx = rng.normal(0.0, noise.sigma_xyz);
    const double dy = rng.normal(0.0, noise.sigma_xyz);
    const double dz = rng.normal(0.0, noise.sigma_xyz);
    const double dyaw = rng.normal(0.0, noise.sigma_yaw);
    out.push_back({Pose::make(gt_pose.tx + dx, gt_pose.ty + dy, gt_pose.tz + dz,
                              gt_pose.yaw + dyaw),
                   0.9});
  }
  int n_fp = static_cast<int>(std::floor(noise.fp_rate));
  if (rng.bernoulli(noise.fp_rate - n_fp)) ++n_fp;
  for (int i = 0; i < n_fp; ++i) {
    const double r = noise.fp_radius * std::sqrt(rng.uniform());
    const double a = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
    out.push_back({Pose::make(gt_pose.tx + r * std::cos(a), gt_pose.ty + r * std::sin(a),
                              gt_pose.tz, yaw),
                   0.9});
  }
  return out;
}

BoxSize metric_box(const AnalyticShape& shape, double length) {
  const double k = length / (2.0 * shape.half_length);
  return BoxSize{2.0 * shape.half_height * k, 2.0 * shape.half_width * k, length};
}

double TrackletSequence::mean_distance() const {
  if (frames.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& f : frames) sum += (f.gt_pose.translation() - sensor.origin).norm();
  return sum / static_cast<double>(frames.size());
}

TrackletSequence gen_tracklet(const TrackletConfig& config, uint64_t seed) {
  if (config.n_frames < 2) throw ConfigError("gen_tracklet: n_frames must be >= 2");
  config.sensor.validate();
  TrackletSequence seq;
  seq.seed = seed;
  seq.name = "trk_" + to_hex(seed).substr(8);
  seq.sensor = config.sensor;
  seq.detection = config.detection;
  seq.has_detections = config.with_detections;

  Rng rng(mix_seed(seed, 1));
  seq.gt_shape = sample_shape_family(mix_seed(seed, 2), 1).front();
  seq.size = metric_box(seq.gt_shape, rng.uniform(config.min_length, config.max_length));
  seq.profile = config.random_profile ? static_cast<MotionProfile>(rng.below(3)) : config.profile;

  TrajectoryConfig traj = config.trajectory;
  traj.center_z = config.sensor.ground_z + seq.size.h / 2.0;
  const auto poses = gen_trajectory(mix_seed(seed, 3), config.n_frames, seq.profile, traj);

  seq.frames.reserve(poses.size());
  for (size_t k = 0; k < poses.size(); ++k) {
    TrackletFrame f;
    f.gt_pose = poses[k];
    f.points = render_scan(seq.gt_shape, poses[k], seq.size, config.sensor,
                           mix_seed(seed, 100 + k));
    if (config.with_detections)
      f.detections = gen_detections(poses[k], config.detection, mix_seed(seed, 100000 + k));
    seq.frames.push_back(std::move(f));
  }
  seq.first_frame_points = static_cast<int>(
      crop_indices(seq.frames[0].points, poses[0], seq.size, 1.0).size());
  return seq;
}

}  // namespace imptrack
