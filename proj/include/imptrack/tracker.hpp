#pragma once

#include <optional>
#include <string>
#include <vector>

#include "imptrack/geometry.hpp"
#include "imptrack/lidar_sim.hpp"
#include "imptrack/nn_index.hpp"
#include "imptrack/sdf_net.hpp"

namespace imptrack {

struct TrackConfig {
  double delta = 0.05;            // smooth-l1 threshold (normalized SDF units)
  double lambda = 10.0;           // code regularizer weight
  double gamma = 0.1;             // Chamfer weight
  double pose_lr = 0.1;
  double code_lr = 1e-3;
  int pose_iters = 300;
  // Pose descent stops early once the best objective has not improved by more
  // than pose_patience_tol (relative) for pose_patience steps; 0 disables.
  int pose_patience = 20;
  double pose_patience_tol = 1e-6;
  int code_iters = 20;
  // Shape adaptation uses at most this many history points (even stride); 0 = all.
  int adapt_max_points = 1024;
  int min_adapt_points = 10;
  double crop_dilation = 1.25;
  double history_voxel = 0.05;    // meters
  double detection_weight = 1.0;
  double detection_gate = 3.0;    // meters
  bool use_detections = false;
  bool shape_loss = true;         // SDF data term in pose and shape steps
  int adapt_frames = -1;          // frames receiving shape updates; -1 = all, 0 = mean code only

  void validate() const;
};

/// Aggregated canonical-frame observations with a nearest-neighbour index.
struct HistoryBuffer {
  PointCloud points{Eigen::Matrix3Xd(3, 0), Frame::Canonical};
  NNIndex index;
  std::vector<int> frame_counts;  // points contributed by each update

  bool empty() const { return points.empty(); }
};

HistoryBuffer update_history(const HistoryBuffer& history, const PointCloud& crop,
                             double voxel);

/// Summary of one inner optimization. Objectives are evaluated at the start
/// point and after every step; the best iterate is returned.
struct OptimDiag {
  bool ran = false;
  int iterations = 0;
  int best_iteration = 0;
  double initial_objective = 0.0;
  double best_objective = 0.0;
  double max_eval_norm = 0.0;  // largest normalized point norm fed to the decoder
};

struct FrameDiagnostics {
  int frame = 0;
  int crop_points = 0;         // points used for pose estimation
  int history_added = 0;       // points in X_t(T*_t)
  int history_size = 0;
  bool empty_crop = false;
  bool detection_used = false;
  bool adapted = false;
  std::string gate;            // why the shape step did or did not run
  OptimDiag pose;
  OptimDiag code;
};

/// Shape-code objective over canonical metric points:
/// mean smooth-l1(f(normalize(x), z), 0) + lambda * |z|^2 / d.
struct CodeObjective {
  double value = 0.0;
  ShapeCode gradient;
};
CodeObjective code_objective(const DecoderParams& params, const ShapeCode& z,
                             const Eigen::Matrix3Xd& normalized_points,
                             const TrackConfig& config);

/// Gradient descent on the code from `start` over the points of the first
/// crop. Throws std::invalid_argument on an empty crop; the caller should then
/// keep the mean code.
ShapeCode init_shape_code(const PointCloud& crop0, const BoxSize& size,
                          const DecoderParams& params, const ShapeCode& start,
                          const TrackConfig& config, OptimDiag* diag = nullptr);

std::optional<Pose> associate_detection(const std::vector<Detection>& detections,
                                        const Pose& pose, double gate = 3.0);

struct PoseEstimate {
  Pose pose;
  OptimDiag diag;
  int crop_points = 0;
  bool empty_crop = false;
  bool detection_used = false;
};

/// Pose objective terms at a given pose for fixed world points.
struct PoseObjective {
  double value = 0.0;
  Eigen::Vector4d gradient = Eigen::Vector4d::Zero();
  double max_eval_norm = 0.0;
};
PoseObjective pose_objective(SdfField& field, const Eigen::Matrix3Xd& world_points,
                             const Pose& pose, const BoxSize& size,
                             const HistoryBuffer& history, const std::optional<Pose>& detection,
                             const TrackConfig& config, bool want_gradient = true);

PoseEstimate estimate_pose(const PointCloud& frame, const Pose& prev_pose, const BoxSize& size,
                           const ShapeCode& z, const HistoryBuffer& history,
                           const std::vector<Detection>* detections,
                           const DecoderParams& params, const TrackConfig& config);

struct AdaptResult {
  ShapeCode code;
  OptimDiag diag;
  bool adapted = false;
};

/// Gated shape adaptation over the history points (capped by adapt_max_points). The code is returned
/// unchanged when the newest frame contributed fewer than min_adapt_points.
AdaptResult adapt_code(const HistoryBuffer& history, int newest_frame_points,
                       const ShapeCode& z_prev, const BoxSize& size,
                       const DecoderParams& params, const TrackConfig& config);

struct TrackResult {
  std::vector<Pose> poses;
  std::vector<ShapeCode> codes;  // code after each frame
  ShapeCode init_code;           // code after frame 0
  ShapeCode final_code;
  std::vector<FrameDiagnostics> diagnostics;
  HistoryBuffer history;
};

TrackResult track_sequence(const TrackletSequence& sequence, const DecoderParams& params,
                           const ShapeCode& mean_code, const TrackConfig& config);

/// Preprocessing applied to every frame before tracking.
PointCloud preprocess_frame(const TrackletSequence& sequence, const PointCloud& frame);

std::string code_checksum(const ShapeCode& z);

}  // namespace imptrack
