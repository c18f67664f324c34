#pragma once

#include <functional>
#include <string>
#include <vector>

#include "imptrack/io.hpp"
#include "imptrack/kalman.hpp"
#include "imptrack/lidar_sim.hpp"
#include "imptrack/prior_train.hpp"
#include "imptrack/recon.hpp"
#include "imptrack/tracker.hpp"

namespace imptrack {

inline constexpr int kExperimentConfigVersion = 1;

struct AblationSwitches {
  bool regularizer = true;
  bool chamfer_loss = true;
  bool shape_loss = true;
  bool detection_loss = false;
  int adapt_frames = -1;  // -1 = every frame, 0 = mean code only

  TrackConfig apply(TrackConfig base) const;
};

struct SuiteConfig {
  int n_tracklets = 20;
  uint64_t seed = 1000;  // tracklet i uses seed + i
  TrackletConfig tracklet;
};

struct MetricsConfig {
  ShapeMetricOptions shape;
  double gt_voxel = 0.05;  // meters, downsampling of the aggregated ground-truth points
};

struct ExperimentConfig {
  uint64_t seed = 7;
  int n_shapes = 32;
  FamilyBounds family;
  TrainConfig train;
  SuiteConfig suite;
  SuiteConfig noisy_suite;
  TrackConfig track;
  AblationSwitches ablation;
  KalmanConfig kalman;
  MetricsConfig metrics;
  std::string output_dir = "imptrack_out";

  ExperimentConfig();
  TrackConfig track_config() const { return ablation.apply(track); }
};

/// Default noisy suite: LiDAR dropout 0.2, detection sigma_xyz 0.3 m.
SuiteConfig high_noise_suite(SuiteConfig base);

/// JSON with a mandatory "version" field; unknown keys raise ConfigError.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& config);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be written
/// to per-index slots, which keeps output independent of the job count. The
/// first failing index's exception is rethrown.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn);

struct Pretrained {
  DecoderParams params;
  CodeTable codes;
  ShapeCode mean;
  std::vector<double> loss_history;
};
std::vector<AnalyticShape> training_shapes(const ExperimentConfig& config);
Pretrained pretrain(const ExperimentConfig& config);

std::vector<TrackletSequence> generate_suite(const SuiteConfig& suite, int jobs = 1);

/// Object points of every frame, cropped with the ground-truth pose and
/// expressed in the canonical metric frame, voxel-downsampled.
PointCloud gt_shape_points(const TrackletSequence& sequence, double voxel);

struct RunOptions {
  bool final_shape_metrics = true;
  bool init_shape_metrics = false;
};

ResultRecord run_tracker(const TrackletSequence& sequence, const Pretrained& prior,
                         const TrackConfig& config, const std::string& method,
                         const MetricsConfig& metrics, const RunOptions& options = {},
                         TrackResult* full = nullptr);
ResultRecord run_kf(const TrackletSequence& sequence, const KalmanConfig& config);

/// Inner optimizations whose returned objective exceeds the initial one.
int descent_violations(const ResultRecord& record);
/// Frames whose newest points number below the gate but whose code changed.
int gating_violations(const ResultRecord& record, int min_adapt_points);

struct VariantSummary {
  std::string name;
  std::string suite;
  int tracklets = 0;
  double success = 0.0, precision = 0.0, accuracy = 0.0, robustness = 0.0;
  double mean_iou = 0.0;           // fraction
  double mean_center_error = 0.0;  // meters
  double acd_init = 0.0, acd_final = 0.0, recall_final = 0.0;  // NaN when not computed
  double acd_improved_fraction = 0.0;  // NaN when not computed
  int descent_violations = 0;
  int gating_violations = 0;
  double seconds = 0.0;
  std::vector<ResultRecord> records;
};

struct AblationReport {
  std::vector<VariantSummary> variants;
  const VariantSummary& at(const std::string& name) const;
  std::string to_csv() const;
  std::string to_json() const;
};

VariantSummary summarize_variant(const std::string& name, const std::string& suite,
                                 std::vector<ResultRecord> records, int min_adapt_points,
                                 double seconds);

/// Regression-suite variants (full model, adapted-frame sweep, loss ablations)
/// and the noisy-detection comparison, as one report. Writes per-run result
/// files under out_dir when it is non-empty.
AblationReport run_ablation_suite(const ExperimentConfig& config, const Pretrained& prior,
                                  int jobs, const std::string& out_dir,
                                  const std::function<void(const std::string&)>& log = {});

}  // namespace imptrack
