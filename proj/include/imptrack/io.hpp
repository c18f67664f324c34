#pragma once

#include <optional>
#include <string>
#include <vector>

#include "imptrack/eval.hpp"
#include "imptrack/lidar_sim.hpp"
#include "imptrack/prior_train.hpp"
#include "imptrack/recon.hpp"
#include "imptrack/sdf_net.hpp"
#include "imptrack/tracker.hpp"

namespace imptrack {

inline constexpr int kCheckpointVersion = 1;
inline constexpr int kTrackletSchemaVersion = 1;
inline constexpr int kResultSchemaVersion = 1;

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
/// FNV-1a 64 of the file bytes, hex.
std::string file_digest(const std::string& path);

/// One JSON header line followed by the little-endian float64 blob: per layer,
/// weights row-major then biases.
std::string serialize_checkpoint(const DecoderParams& params);
DecoderParams deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const DecoderParams& params);
DecoderParams load_checkpoint(const std::string& path);

void save_code_table(const std::string& path, const CodeTable& table);
CodeTable load_code_table(const std::string& path);
void save_loss_csv(const std::string& path, const std::vector<double>& loss_history);

std::string serialize_tracklet(const TrackletSequence& sequence);
TrackletSequence deserialize_tracklet(const std::string& text);
void save_tracklet(const std::string& path, const TrackletSequence& sequence);
TrackletSequence load_tracklet(const std::string& path);

/// Everything the evaluator needs from one tracking run, plus the tracker's
/// code trail and diagnostics. Methods without a shape leave the code fields empty.
struct ResultRecord {
  std::string tracklet;
  std::string method;
  BoxSize size;
  int first_frame_points = 0;
  double mean_distance = 0.0;
  std::vector<Pose> gt;
  std::vector<Pose> poses;
  std::vector<std::string> code_checksums;
  ShapeCode init_code;
  ShapeCode final_code;
  std::vector<FrameDiagnostics> diagnostics;
  std::optional<ShapeMetrics> shape_init;
  std::optional<ShapeMetrics> shape_final;
};

ResultRecord make_result_record(const TrackletSequence& sequence, const TrackResult& result,
                                const std::string& method);
ResultRecord make_pose_only_record(const TrackletSequence& sequence,
                                   const std::vector<Pose>& poses, const std::string& method);
TrackletResult to_tracklet_result(const ResultRecord& record);

std::string serialize_result(const ResultRecord& record);
ResultRecord deserialize_result(const std::string& text);
void save_result(const std::string& path, const ResultRecord& record);
ResultRecord load_result(const std::string& path);

}  // namespace imptrack
