#include "imptrack/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "imptrack/common.hpp"

namespace imptrack {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_result(const TrackletResult& r) {
  if (r.pred.empty()) throw std::invalid_argument("empty tracklet result: " + r.name);
  if (r.pred.size() != r.gt.size() || r.iou.size() != r.pred.size() ||
      r.center_error.size() != r.pred.size())
    throw std::invalid_argument("inconsistent frame counts in result: " + r.name);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& s) {
  if (s.empty()) return kNaN;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("bad number in report CSV: " + s);
  return v;
}

ReportRow scope_row(const std::string& scope, const std::vector<TrackletResult>& results,
                    const std::vector<size_t>& members) {
  ReportRow row{scope, int(members.size()), kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
  if (members.empty()) return row;
  double s = 0, p = 0, a = 0, r = 0, acd = 0, rec = 0;
  bool shapes = true;
  for (size_t i : members) {
    const SuccessPrecision sp = success_precision(results[i]);
    const AccuracyRobustness ar = accuracy_robustness(results[i]);
    s += sp.success;
    p += sp.precision;
    a += ar.accuracy;
    r += ar.robustness;
    shapes = shapes && results[i].has_shape;
    acd += results[i].acd;
    rec += results[i].recall;
  }
  const double n = double(members.size());
  row.success = s / n;
  row.precision = p / n;
  row.accuracy = a / n;
  row.robustness = r / n;
  if (shapes) {
    row.acd = acd / n;
    row.recall = rec / n;
  }
  return row;
}

const char* kCsvHeader = "version,scope,count,success,precision,accuracy,robustness,acd,recall";

}  // namespace

void evaluate_frames(TrackletResult& result) {
  if (result.pred.size() != result.gt.size())
    throw std::invalid_argument("prediction and ground truth lengths differ: " + result.name);
  result.iou.resize(result.pred.size());
  result.center_error.resize(result.pred.size());
  for (size_t i = 0; i < result.pred.size(); ++i) {
    result.iou[i] = box_iou_3d(result.pred[i], result.size, result.gt[i], result.size);
    result.center_error[i] = (result.pred[i].translation() - result.gt[i].translation()).norm();
  }
}

TrackletResult make_tracklet_result(std::string name, std::vector<Pose> pred, std::vector<Pose> gt,
                                    const BoxSize& size, int first_frame_points,
                                    double mean_distance) {
  TrackletResult r;
  r.name = std::move(name);
  r.pred = std::move(pred);
  r.gt = std::move(gt);
  r.size = size;
  r.first_frame_points = first_frame_points;
  r.mean_distance = mean_distance;
  evaluate_frames(r);
  return r;
}

SuccessPrecision success_precision(const TrackletResult& result) {
  check_result(result);
  double iou = 0.0, prec = 0.0;
  for (size_t i = 0; i < result.iou.size(); ++i) {
    iou += result.iou[i];
    prec += std::clamp(1.0 - result.center_error[i] / kPrecisionRange, 0.0, 1.0);
  }
  const double n = double(result.iou.size());
  return {100.0 * iou / n, 100.0 * prec / n};
}

AccuracyRobustness accuracy_robustness(const TrackletResult& result) {
  check_result(result);
  const int n = int(result.iou.size());
  int drift = n;
  int run = 0;
  for (int i = 0; i < n; ++i) {
    run = result.iou[size_t(i)] < kDriftIou ? run + 1 : 0;
    if (run == kDriftRun) {
      drift = i - kDriftRun + 1;
      break;
    }
  }
  AccuracyRobustness out;
  out.drift_frame = drift == n ? -1 : drift;
  out.robustness = 100.0 * double(drift) / double(n);
  if (drift > 0) {
    double sum = 0.0;
    for (int i = 0; i < drift; ++i) sum += result.iou[size_t(i)];
    out.accuracy = 100.0 * sum / double(drift);
  }
  return out;
}

DifficultySplit difficulty_split(const std::vector<TrackletResult>& results,
                                 const DifficultyThresholds& thresholds) {
  if (thresholds.hard_below > thresholds.easy_above + 1)
    throw ConfigError("difficulty thresholds overlap");
  DifficultySplit split;
  for (size_t i = 0; i < results.size(); ++i) {
    const int n = results[i].first_frame_points;
    if (n > thresholds.easy_above) split.easy.push_back(i);
    else if (n < thresholds.hard_below) split.hard.push_back(i);
    else split.medium.push_back(i);
  }
  return split;
}

std::vector<DistanceBin> distance_bins(const std::vector<TrackletResult>& results, double width) {
  if (!(width > 0.0)) throw ConfigError("distance bin width must be positive");
  std::map<int, DistanceBin> bins;
  for (size_t i = 0; i < results.size(); ++i) {
    const int idx = int(std::floor(results[i].mean_distance / width));
    DistanceBin& b = bins[idx];
    b.index = idx;
    b.lo = idx * width;
    b.hi = (idx + 1) * width;
    b.members.push_back(i);
  }
  std::vector<DistanceBin> out;
  for (auto& [idx, b] : bins) {
    for (size_t i : b.members) {
      const SuccessPrecision sp = success_precision(results[i]);
      b.success += sp.success;
      b.precision += sp.precision;
    }
    b.success /= double(b.members.size());
    b.precision /= double(b.members.size());
    out.push_back(std::move(b));
  }
  return out;
}

Report aggregate_report(const std::vector<TrackletResult>& results,
                        const DifficultyThresholds& thresholds, double bin_width) {
  Report report;
  std::vector<size_t> all(results.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  report.rows.push_back(scope_row("overall", results, all));
  const DifficultySplit split = difficulty_split(results, thresholds);
  report.rows.push_back(scope_row("easy", results, split.easy));
  report.rows.push_back(scope_row("medium", results, split.medium));
  report.rows.push_back(scope_row("hard", results, split.hard));
  for (const DistanceBin& b : distance_bins(results, bin_width)) {
    std::ostringstream scope;
    scope << "dist_" << format_number(b.lo) << "_" << format_number(b.hi);
    report.rows.push_back(scope_row(scope.str(), results, b.members));
  }
  return report;
}

std::string Report::to_csv() const {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const ReportRow& r : rows) {
    out << kReportVersion << ',' << r.scope << ',' << r.count << ',' << format_number(r.success) << ','
        << format_number(r.precision) << ',' << format_number(r.accuracy) << ','
        << format_number(r.robustness) << ',' << format_number(r.acd) << ','
        << format_number(r.recall) << '\n';
  }
  return out.str();
}

std::string Report::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = kReportVersion;
  j["accuracy_robustness"] = "local definition: drift starts at the first of 5 consecutive frames "
                             "with IoU < 0.1";
  j["difficulty"] = "local definition: easy > 100 first-frame points, hard < 30, medium otherwise";
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const ReportRow& r : rows) {
    auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); };
    arr.push_back({{"scope", r.scope},
                   {"count", r.count},
                   {"success", num(r.success)},
                   {"precision", num(r.precision)},
                   {"accuracy", num(r.accuracy)},
                   {"robustness", num(r.robustness)},
                   {"acd", num(r.acd)},
                   {"recall", num(r.recall)}});
  }
  j["rows"] = arr;
  return j.dump(2) + "\n";
}

std::vector<ReportRow> parse_report_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw DataError("unexpected report CSV header");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (cells.size() != 9) throw DataError("report CSV row has wrong column count");
    if (cells[0] != std::to_string(kReportVersion)) throw DataError("unsupported report version");
    ReportRow r;
    r.scope = cells[1];
    r.count = int(parse_number(cells[2]));
    r.success = parse_number(cells[3]);
    r.precision = parse_number(cells[4]);
    r.accuracy = parse_number(cells[5]);
    r.robustness = parse_number(cells[6]);
    r.acd = parse_number(cells[7]);
    r.recall = parse_number(cells[8]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace imptrack
