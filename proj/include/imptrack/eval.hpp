#pragma once

#include <map>
#include <string>
#include <vector>

#include "imptrack/geometry.hpp"

namespace imptrack {

struct TrackletResult {
  std::string name;
  std::vector<Pose> pred;
  std::vector<Pose> gt;
  BoxSize size;
  int first_frame_points = 0;
  double mean_distance = 0.0;
  std::vector<double> iou;           // per frame
  std::vector<double> center_error;  // per frame, meters
  bool has_shape = false;
  double acd = 0.0;
  double recall = 0.0;
};

/// Builds a result and fills per-frame IoU and center error.
TrackletResult make_tracklet_result(std::string name, std::vector<Pose> pred, std::vector<Pose> gt,
                                    const BoxSize& size, int first_frame_points,
                                    double mean_distance);
/// Recomputes iou and center_error from the poses.
void evaluate_frames(TrackletResult& result);

struct SuccessPrecision {
  double success = 0.0;
  double precision = 0.0;
};
struct AccuracyRobustness {
  double accuracy = 0.0;
  double robustness = 0.0;
  int drift_frame = -1;  // -1 when the track never drifts
};

inline constexpr double kPrecisionRange = 2.0;  // meters
inline constexpr double kDriftIou = 0.1;
inline constexpr int kDriftRun = 5;

SuccessPrecision success_precision(const TrackletResult& result);
AccuracyRobustness accuracy_robustness(const TrackletResult& result);

struct DifficultyThresholds {
  int easy_above = 100;  // easy: points > easy_above
  int hard_below = 30;   // hard: points < hard_below; medium otherwise
};
struct DifficultySplit {
  std::vector<size_t> easy, medium, hard;  // indices into the input
};
DifficultySplit difficulty_split(const std::vector<TrackletResult>& results,
                                 const DifficultyThresholds& thresholds = {});

struct DistanceBin {
  int index = 0;  // covers [index * width, (index + 1) * width)
  double lo = 0.0, hi = 0.0;
  std::vector<size_t> members;
  double success = 0.0;
  double precision = 0.0;
};
std::vector<DistanceBin> distance_bins(const std::vector<TrackletResult>& results,
                                       double width = 10.0);

inline constexpr int kReportVersion = 1;

struct ReportRow {
  std::string scope;
  int count = 0;
  // NaN when the scope is empty or no shapes were supplied.
  double success, precision, accuracy, robustness, acd, recall;
};

struct Report {
  std::vector<ReportRow> rows;  // overall, easy, medium, hard, then non-empty distance bins
  std::string to_csv() const;
  std::string to_json() const;
};

/// Scope metrics are means over the tracklets in the scope.
Report aggregate_report(const std::vector<TrackletResult>& results,
                        const DifficultyThresholds& thresholds = {}, double bin_width = 10.0);

/// Parses a report CSV written by Report::to_csv.
std::vector<ReportRow> parse_report_csv(const std::string& csv);

}  // namespace imptrack
