#include "imptrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "imptrack/common.hpp"

namespace imptrack {

void TrackConfig::validate() const {
  if (!(delta > 0.0)) throw ConfigError("TrackConfig: delta must be positive");
  if (lambda < 0.0 || gamma < 0.0 || detection_weight < 0.0)
    throw ConfigError("TrackConfig: loss weights must be non-negative");
  if (!(pose_lr > 0.0) || !(code_lr > 0.0))
    throw ConfigError("TrackConfig: learning rates must be positive");
  if (pose_iters < 0 || code_iters < 0) throw ConfigError("TrackConfig: negative iteration count");
  if (min_adapt_points < 0) throw ConfigError("TrackConfig: min_adapt_points must be >= 0");
  if (crop_dilation < 1.0) throw ConfigError("TrackConfig: crop dilation must be >= 1");
  if (!(history_voxel > 0.0)) throw ConfigError("TrackConfig: history voxel must be positive");
  if (!(detection_gate > 0.0)) throw ConfigError("TrackConfig: detection gate must be positive");
  if (adapt_frames < -1) throw ConfigError("TrackConfig: adapt_frames must be >= -1");
  if (adapt_max_points < 0) throw ConfigError("TrackConfig: adapt_max_points must be >= 0");
  if (pose_patience < 0 || pose_patience_tol < 0.0)
    throw ConfigError("TrackConfig: pose patience settings must be non-negative");
}

HistoryBuffer update_history(const HistoryBuffer& history, const PointCloud& crop,
                             double voxel) {
  if (crop.empty()) return history;
  Eigen::Matrix3Xd merged(3, history.points.size() + crop.size());
  merged << history.points.points, crop.points;
  HistoryBuffer out;
  out.points = voxel_downsample(PointCloud(std::move(merged), Frame::Canonical), voxel);
  out.index = NNIndex(out.points.points);
  out.frame_counts = history.frame_counts;
  out.frame_counts.push_back(static_cast<int>(crop.size()));
  return out;
}

CodeObjective code_objective(const DecoderParams& params, const ShapeCode& z,
                             const Eigen::Matrix3Xd& normalized_points,
                             const TrackConfig& config) {
  const double d = static_cast<double>(std::max<Eigen::Index>(1, z.size()));
  CodeObjective out;
  out.value = config.lambda * z.squaredNorm() / d;
  out.gradient = (2.0 * config.lambda / d) * z;
  const Eigen::Index n = normalized_points.cols();
  if (config.shape_loss && n > 0) {
    // Blocks keep the hidden activations cache-resident on large histories.
    constexpr Eigen::Index kBlock = 256;
    SdfField field(params, z);
    Eigen::VectorXd up;
    double sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += kBlock) {
      const Eigen::Index m = std::min(kBlock, n - start);
      const Eigen::VectorXd& f = field.evaluate(normalized_points.middleCols(start, m));
      up.resize(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        const auto l = smooth_l1(f(i), config.delta);
        sum += l.value;
        up(i) = l.derivative / static_cast<double>(n);
      }
      out.gradient += field.backward(up, true).d_code;
    }
    out.value += sum / static_cast<double>(n);
  }
  return out;
}

namespace {

double max_norm(const Eigen::Matrix3Xd& pts) {
  return pts.cols() == 0 ? 0.0 : pts.colwise().norm().maxCoeff();
}

// Plain gradient descent on the code with best-iterate return.
ShapeCode descend_code(const DecoderParams& params, const ShapeCode& start,
                       const Eigen::Matrix3Xd& normalized, const TrackConfig& config,
                       OptimDiag& diag) {
  ShapeCode z = start;
  ShapeCode best = start;
  diag = OptimDiag{};
  diag.ran = true;
  diag.max_eval_norm = max_norm(normalized);
  double best_value = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= config.code_iters; ++it) {
    const auto obj = code_objective(params, z, normalized, config);
    if (!std::isfinite(obj.value)) throw NumericError("shape code objective is not finite");
    if (it == 0) diag.initial_objective = obj.value;
    if (obj.value < best_value) {
      best_value = obj.value;
      best = z;
      diag.best_iteration = it;
    }
    if (it == config.code_iters) break;
    z -= config.code_lr * obj.gradient;
    diag.iterations = it + 1;
  }
  diag.best_objective = best_value;
  return best;
}

}  // namespace

ShapeCode init_shape_code(const PointCloud& crop0, const BoxSize& size,
                          const DecoderParams& params, const ShapeCode& start,
                          const TrackConfig& config, OptimDiag* diag) {
  if (crop0.empty())
    throw std::invalid_argument("init_shape_code: empty crop; fall back to the mean code");
  const Eigen::Matrix3Xd normalized = crop0.points * normalization_scale(size);
  OptimDiag local;
  ShapeCode z = descend_code(params, start, normalized, config, local);
  if (diag) *diag = local;
  return z;
}

std::optional<Pose> associate_detection(const std::vector<Detection>& detections,
                                        const Pose& pose, double gate) {
  std::optional<Pose> best;
  double best_d = gate;
  for (const auto& det : detections) {
    const double d = (det.pose.translation() - pose.translation()).norm();
    if (d < best_d) {
      best_d = d;
      best = det.pose;
    }
  }
  return best;
}

PoseObjective pose_objective(SdfField& field, const Eigen::Matrix3Xd& world_points,
                             const Pose& pose, const BoxSize& size,
                             const HistoryBuffer& history, const std::optional<Pose>& detection,
                             const TrackConfig& config, bool want_gradient) {
  PoseObjective out;
  const Eigen::Index n = world_points.cols();
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  const double scale = normalization_scale(size);

  if (n > 0) {
    Eigen::Matrix3Xd q(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double dx = world_points(0, i) - pose.tx;
      const double dy = world_points(1, i) - pose.ty;
      q(0, i) = c * dx + s * dy;
      q(1, i) = -s * dx + c * dy;
      q(2, i) = world_points(2, i) - pose.tz;
    }
    Eigen::Matrix3Xd dq = Eigen::Matrix3Xd::Zero(3, n);
    const double inv_n = 1.0 / static_cast<double>(n);

    if (config.shape_loss) {
      const Eigen::Matrix3Xd u = scale * q;
      out.max_eval_norm = max_norm(u);
      const Eigen::VectorXd& f = field.evaluate(u);
      Eigen::VectorXd up(n);
      double sum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto l = smooth_l1(f(i), config.delta);
        sum += l.value;
        up(i) = l.derivative * inv_n;
      }
      out.value += sum * inv_n;
      if (want_gradient) dq += scale * field.backward(up, false).d_points;
    }

    if (config.gamma > 0.0 && !history.empty()) {
      double sum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector3d qi = q.col(i);
        const auto [j, d2] = history.index.nearest(qi);
        sum += d2;
        if (want_gradient)
          dq.col(i) += (2.0 * config.gamma * inv_n) * (qi - history.points.points.col(j));
      }
      out.value += config.gamma * sum * inv_n;
    }

    if (want_gradient) {
      // chain rule through pose_jacobian, summed over points
      for (Eigen::Index i = 0; i < n; ++i) {
        const double gx = dq(0, i), gy = dq(1, i), gz = dq(2, i);
        out.gradient[0] += -c * gx + s * gy;
        out.gradient[1] += -s * gx - c * gy;
        out.gradient[2] += -gz;
        out.gradient[3] += q(1, i) * gx - q(0, i) * gy;
      }
    }
  }

  if (detection && config.detection_weight > 0.0) {
    const double w = config.detection_weight;
    const double diffs[4] = {pose.tx - detection->tx, pose.ty - detection->ty,
                             pose.tz - detection->tz, wrap_angle(pose.yaw - detection->yaw)};
    for (int k = 0; k < 4; ++k) {
      out.value += w * std::abs(diffs[k]);
      if (want_gradient) out.gradient[k] += w * ((diffs[k] > 0.0) - (diffs[k] < 0.0));
    }
  }
  return out;
}

PoseEstimate estimate_pose(const PointCloud& frame, const Pose& prev_pose, const BoxSize& size,
                           const ShapeCode& z, const HistoryBuffer& history,
                           const std::vector<Detection>* detections,
                           const DecoderParams& params, const TrackConfig& config) {
  PoseEstimate est;
  est.pose = prev_pose;
  const auto kept = crop_indices(frame, prev_pose, size, config.crop_dilation);
  est.crop_points = static_cast<int>(kept.size());
  if (kept.empty()) {
    est.empty_crop = true;
    return est;
  }
  Eigen::Matrix3Xd world(3, static_cast<Eigen::Index>(kept.size()));
  for (size_t k = 0; k < kept.size(); ++k)
    world.col(static_cast<Eigen::Index>(k)) = frame.points.col(kept[k]);

  std::optional<Pose> detection;
  if (config.use_detections && detections)
    detection = associate_detection(*detections, prev_pose, config.detection_gate);
  est.detection_used = detection.has_value();

  SdfField field(params, z);
  Eigen::Vector4d theta = prev_pose.as_vector();
  Eigen::Vector4d best = theta;
  double best_value = std::numeric_limits<double>::infinity();
  auto& diag = est.diag;
  diag.ran = true;
  for (int it = 0; it <= config.pose_iters; ++it) {
    const bool last = it == config.pose_iters;
    const Pose current = Pose::from_vector(theta);
    const auto obj =
        pose_objective(field, world, current, size, history, detection, config, !last);
    if (!std::isfinite(obj.value)) throw NumericError("pose objective is not finite");
    diag.max_eval_norm = std::max(diag.max_eval_norm, obj.max_eval_norm);
    if (it == 0) diag.initial_objective = obj.value;
    if (obj.value < best_value - config.pose_patience_tol * (1.0 + std::abs(best_value))) {
      best_value = obj.value;
      best = theta;
      diag.best_iteration = it;
    } else if (obj.value < best_value) {
      best_value = obj.value;
      best = theta;
    }
    if (last) break;
    if (config.pose_patience > 0 && it - diag.best_iteration >= config.pose_patience) break;
    theta -= config.pose_lr * obj.gradient;
    theta[3] = wrap_angle(theta[3]);
    diag.iterations = it + 1;
  }
  diag.best_objective = best_value;
  est.pose = Pose::from_vector(best);
  return est;
}

AdaptResult adapt_code(const HistoryBuffer& history, int newest_frame_points,
                       const ShapeCode& z_prev, const BoxSize& size,
                       const DecoderParams& params, const TrackConfig& config) {
  AdaptResult r;
  r.code = z_prev;
  if (newest_frame_points < config.min_adapt_points || history.empty()) return r;
  const Eigen::Matrix3Xd& pts = history.points.points;
  Eigen::Matrix3Xd normalized;
  if (config.adapt_max_points > 0 && pts.cols() > config.adapt_max_points) {
    // Even stride over the voxel-ordered history.
    const Eigen::Index stride = (pts.cols() + config.adapt_max_points - 1) / config.adapt_max_points;
    normalized.resize(3, (pts.cols() + stride - 1) / stride);
    for (Eigen::Index i = 0, k = 0; i < pts.cols(); i += stride, ++k) normalized.col(k) = pts.col(i);
    normalized *= normalization_scale(size);
  } else {
    normalized = pts * normalization_scale(size);
  }
  r.code = descend_code(params, z_prev, normalized, config, r.diag);
  r.adapted = true;
  return r;
}

PointCloud preprocess_frame(const TrackletSequence& sequence, const PointCloud& frame) {
  if (!sequence.sensor.ground_plane) return frame;
  return remove_ground(frame, sequence.sensor.ground_z + 0.2);
}

std::string code_checksum(const ShapeCode& z) {
  return to_hex(fnv1a64(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(z.data()),
      static_cast<size_t>(z.size()) * sizeof(double))));
}

namespace {

bool shape_step_enabled(const TrackConfig& config, int frame) {
  return config.adapt_frames < 0 || frame < config.adapt_frames;
}

}  // namespace

TrackResult track_sequence(const TrackletSequence& sequence, const DecoderParams& params,
                           const ShapeCode& mean_code, const TrackConfig& config) {
  config.validate();
  params.validate();
  if (sequence.frames.size() < 2) throw DataError("track_sequence: need at least 2 frames");
  if (mean_code.size() != params.dims.code_dim)
    throw ConfigError("track_sequence: mean code dimension does not match the decoder");

  TrackResult out;
  const auto& size = sequence.size;
  ShapeCode z = mean_code;

  // frame 0: given pose, code initialization, history seed
  {
    const Pose pose0 = sequence.frames[0].gt_pose;
    const PointCloud frame0 = preprocess_frame(sequence, sequence.frames[0].points);
    const PointCloud crop0 = crop_points(frame0, pose0, size, config.crop_dilation);
    FrameDiagnostics diag;
    diag.frame = 0;
    diag.crop_points = static_cast<int>(crop0.size());
    diag.history_added = diag.crop_points;
    diag.empty_crop = crop0.empty();
    if (!shape_step_enabled(config, 0)) {
      diag.gate = "disabled";
    } else if (crop0.size() < config.min_adapt_points || crop0.empty()) {
      diag.gate = "few_points";
    } else {
      z = init_shape_code(crop0, size, params, z, config, &diag.code);
      diag.adapted = true;
      diag.gate = "ok";
    }
    out.history = update_history(out.history, crop0, config.history_voxel);
    diag.history_size = static_cast<int>(out.history.points.size());
    out.poses.push_back(pose0);
    out.codes.push_back(z);
    out.diagnostics.push_back(std::move(diag));
  }
  out.init_code = z;

  for (size_t t = 1; t < sequence.frames.size(); ++t) {
    const auto& frame_data = sequence.frames[t];
    const PointCloud frame = preprocess_frame(sequence, frame_data.points);
    FrameDiagnostics diag;
    diag.frame = static_cast<int>(t);

    const auto est = estimate_pose(frame, out.poses.back(), size, z, out.history,
                                   &frame_data.detections, params, config);
    diag.pose = est.diag;
    diag.crop_points = est.crop_points;
    diag.empty_crop = est.empty_crop;
    diag.detection_used = est.detection_used;

    const PointCloud crop = crop_points(frame, est.pose, size, config.crop_dilation);
    diag.history_added = static_cast<int>(crop.size());
    out.history = update_history(out.history, crop, config.history_voxel);
    diag.history_size = static_cast<int>(out.history.points.size());

    if (!shape_step_enabled(config, static_cast<int>(t))) {
      diag.gate = "disabled";
    } else {
      auto adapt = adapt_code(out.history, diag.history_added, z, size, params, config);
      diag.code = adapt.diag;
      diag.adapted = adapt.adapted;
      diag.gate = adapt.adapted ? "ok" : "few_points";
      z = std::move(adapt.code);
    }
    out.poses.push_back(est.pose);
    out.codes.push_back(z);
    out.diagnostics.push_back(std::move(diag));
  }
  out.final_code = z;
  return out;
}

}  // namespace imptrack
