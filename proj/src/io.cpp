#include "imptrack/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "imptrack/common.hpp"

namespace imptrack {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

template <typename T>
T get_field(const json& j, const char* key) {
  if (!j.contains(key)) throw DataError(std::string("missing field: ") + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(std::string("bad field ") + key + ": " + e.what());
  }
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(what + " is not valid JSON: " + e.what());
  }
}

ojson num(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }
double num_or_inf(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

ojson pose_json(const Pose& p) { return ojson::array({p.tx, p.ty, p.tz, p.yaw}); }
Pose pose_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("pose must be a 4-element array");
  return Pose{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

ojson size_json(const BoxSize& s) { return {{"h", s.h}, {"w", s.w}, {"l", s.l}}; }
BoxSize size_from(const json& j) {
  BoxSize s{get_field<double>(j, "h"), get_field<double>(j, "w"), get_field<double>(j, "l")};
  if (!s.valid()) throw DataError("invalid box size");
  return s;
}

ojson code_json(const ShapeCode& z) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < z.size(); ++i) a.push_back(z[i]);
  return a;
}
ShapeCode code_from(const json& j) {
  if (!j.is_array()) throw DataError("code must be an array");
  ShapeCode z(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) z[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return z;
}

std::string encode_points(const Eigen::Matrix3Xd& pts) {
  std::vector<float> buf(static_cast<size_t>(pts.size()));
  for (Eigen::Index c = 0; c < pts.cols(); ++c)
    for (int r = 0; r < 3; ++r) buf[static_cast<size_t>(c * 3 + r)] = static_cast<float>(pts(r, c));
  return base64_encode(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(buf.data()), buf.size() * sizeof(float)));
}
Eigen::Matrix3Xd decode_points(const std::string& text, size_t expected) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % 12 != 0) throw DataError("point blob length is not a multiple of 12 bytes");
  const size_t n = bytes.size() / 12;
  if (n != expected) throw DataError("point blob does not match n_points");
  std::vector<float> buf(n * 3);
  std::memcpy(buf.data(), bytes.data(), bytes.size());
  Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(n));
  for (size_t c = 0; c < n; ++c)
    for (int r = 0; r < 3; ++r) pts(r, static_cast<Eigen::Index>(c)) = buf[c * 3 + size_t(r)];
  return pts;
}

ojson optim_json(const OptimDiag& d) {
  return {{"ran", d.ran},
          {"iterations", d.iterations},
          {"best_iteration", d.best_iteration},
          {"initial_objective", num(d.initial_objective)},
          {"best_objective", num(d.best_objective)},
          {"max_eval_norm", num(d.max_eval_norm)}};
}
OptimDiag optim_from(const json& j) {
  OptimDiag d;
  d.ran = get_field<bool>(j, "ran");
  d.iterations = get_field<int>(j, "iterations");
  d.best_iteration = get_field<int>(j, "best_iteration");
  d.initial_objective = num_or_inf(j.at("initial_objective"));
  d.best_objective = num_or_inf(j.at("best_objective"));
  d.max_eval_norm = num_or_inf(j.at("max_eval_norm"));
  return d;
}

ojson metrics_json(const std::optional<ShapeMetrics>& m) {
  if (!m) return nullptr;
  return {{"acd", num(m->acd)}, {"recall", m->recall}, {"no_surface", m->no_surface}};
}
std::optional<ShapeMetrics> metrics_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  ShapeMetrics m;
  m.acd = num_or_inf(j.at("acd"));
  m.recall = get_field<double>(j, "recall");
  m.no_surface = get_field<bool>(j, "no_surface");
  return m;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw DataError("failed writing " + path);
}

std::string file_digest(const std::string& path) { return to_hex(fnv1a64(read_file(path))); }

std::string serialize_checkpoint(const DecoderParams& params) {
  params.validate();
  std::string blob;
  auto append = [&](double v) {
    char b[8];
    std::memcpy(b, &v, 8);
    blob.append(b, 8);
  };
  for (int l = 0; l < kDecoderLayers; ++l) {
    const auto& w = params.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) append(w(r, c));
    for (Eigen::Index r = 0; r < params.biases[l].size(); ++r) append(params.biases[l](r));
  }
  ojson header = {{"format", "imptrack-decoder"},
                  {"version", kCheckpointVersion},
                  {"activation", "relu"},
                  {"layers", kDecoderLayers},
                  {"code_dim", params.dims.code_dim},
                  {"hidden", params.dims.hidden},
                  {"seed", params.seed},
                  {"blob_bytes", blob.size()}};
  return header.dump() + "\n" + blob;
}

DecoderParams deserialize_checkpoint(const std::string& bytes) {
  const size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw DataError("checkpoint has no header line");
  const json h = parse_json(bytes.substr(0, nl), "checkpoint header");
  if (get_field<std::string>(h, "format") != "imptrack-decoder")
    throw DataError("not a decoder checkpoint");
  if (get_field<int>(h, "version") != kCheckpointVersion)
    throw DataError("unsupported checkpoint version");
  if (get_field<std::string>(h, "activation") != "relu" || get_field<int>(h, "layers") != kDecoderLayers)
    throw DataError("unsupported decoder architecture");
  DecoderDims dims{get_field<int>(h, "code_dim"), get_field<int>(h, "hidden")};
  if (dims.code_dim < 0 || dims.hidden < 1) throw DataError("bad decoder dimensions");
  DecoderParams p = init_params(0, dims);
  p.seed = get_field<uint64_t>(h, "seed");
  const size_t expected = static_cast<size_t>(p.parameter_count()) * 8;
  const size_t blob_bytes = get_field<size_t>(h, "blob_bytes");
  if (blob_bytes != expected || bytes.size() - nl - 1 != expected)
    throw DataError("checkpoint blob size mismatch");
  const char* cur = bytes.data() + nl + 1;
  auto next = [&]() {
    double v;
    std::memcpy(&v, cur, 8);
    cur += 8;
    return v;
  };
  for (int l = 0; l < kDecoderLayers; ++l) {
    auto& w = p.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = next();
    for (Eigen::Index r = 0; r < p.biases[l].size(); ++r) p.biases[l](r) = next();
  }
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("invalid checkpoint: ") + e.what());
  }
  return p;
}

void save_checkpoint(const std::string& path, const DecoderParams& params) {
  write_file(path, serialize_checkpoint(params));
}
DecoderParams load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_file(path));
}

void save_code_table(const std::string& path, const CodeTable& table) {
  ojson codes = ojson::object();
  for (size_t i = 0; i < table.codes.size(); ++i) codes[std::to_string(i)] = code_json(table.codes[i]);
  const int d = table.empty() ? 0 : static_cast<int>(table.codes.front().size());
  ojson j = {{"version", 1}, {"code_dim", d}, {"count", table.codes.size()}, {"codes", codes}};
  write_file(path, j.dump(1) + "\n");
}

CodeTable load_code_table(const std::string& path) {
  const json j = parse_json(read_file(path), path);
  if (get_field<int>(j, "version") != 1) throw DataError("unsupported code table version");
  const size_t count = get_field<size_t>(j, "count");
  const int d = get_field<int>(j, "code_dim");
  const json& codes = j.at("codes");
  CodeTable t;
  for (size_t i = 0; i < count; ++i) {
    const std::string key = std::to_string(i);
    if (!codes.contains(key)) throw DataError("code table is missing id " + key);
    t.codes.push_back(code_from(codes.at(key)));
    if (t.codes.back().size() != d) throw DataError("code table entry has wrong dimension");
  }
  if (codes.size() != count) throw DataError("code table has unexpected ids");
  return t;
}

void save_loss_csv(const std::string& path, const std::vector<double>& loss_history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss\n";
  for (size_t i = 0; i < loss_history.size(); ++i) out << i << ',' << loss_history[i] << '\n';
  write_file(path, out.str());
}

std::string serialize_tracklet(const TrackletSequence& s) {
  const AnalyticShape& g = s.gt_shape;
  ojson frames = ojson::array();
  for (const auto& f : s.frames) {
    ojson dets = ojson::array();
    for (const auto& d : f.detections) dets.push_back({{"pose", pose_json(d.pose)}, {"score", d.score}});
    frames.push_back({{"gt_pose", pose_json(f.gt_pose)},
                      {"n_points", f.points.size()},
                      {"points", encode_points(f.points.points)},
                      {"detections", dets}});
  }
  ojson j = {
      {"schema_version", kTrackletSchemaVersion},
      {"name", s.name},
      {"seed", s.seed},
      {"size", size_json(s.size)},
      {"gt_shape",
       {{"half_length", g.half_length}, {"half_width", g.half_width}, {"half_height", g.half_height},
        {"cabin_length_frac", g.cabin_length_frac}, {"cabin_height_frac", g.cabin_height_frac},
        {"cabin_offset", g.cabin_offset}, {"rounding", g.rounding}, {"blend", g.blend}}},
      {"profile", to_string(s.profile)},
      {"sensor",
       {{"origin", {s.sensor.origin.x(), s.sensor.origin.y(), s.sensor.origin.z()}},
        {"azimuth_resolution", s.sensor.azimuth_resolution},
        {"elevation_rows", s.sensor.elevation_rows},
        {"elevation_min", s.sensor.elevation_min},
        {"elevation_max", s.sensor.elevation_max},
        {"range_noise", s.sensor.range_noise},
        {"dropout", s.sensor.dropout},
        {"max_range", s.sensor.max_range},
        {"ground_plane", s.sensor.ground_plane},
        {"ground_z", s.sensor.ground_z}}},
      {"detection",
       {{"sigma_xyz", s.detection.sigma_xyz}, {"sigma_yaw", s.detection.sigma_yaw},
        {"fn_prob", s.detection.fn_prob}, {"fp_rate", s.detection.fp_rate},
        {"fp_radius", s.detection.fp_radius}}},
      {"has_detections", s.has_detections},
      {"first_frame_points", s.first_frame_points},
      {"n_frames", s.frames.size()},
      {"frames", frames}};
  return j.dump() + "\n";
}

TrackletSequence deserialize_tracklet(const std::string& text) {
  const json j = parse_json(text, "tracklet");
  if (!j.contains("schema_version")) throw DataError("tracklet has no schema_version");
  if (get_field<int>(j, "schema_version") != kTrackletSchemaVersion)
    throw DataError("unsupported tracklet schema version");
  TrackletSequence s;
  try {
    s.name = get_field<std::string>(j, "name");
    s.seed = get_field<uint64_t>(j, "seed");
    s.size = size_from(j.at("size"));
    const json& g = j.at("gt_shape");
    s.gt_shape.half_length = get_field<double>(g, "half_length");
    s.gt_shape.half_width = get_field<double>(g, "half_width");
    s.gt_shape.half_height = get_field<double>(g, "half_height");
    s.gt_shape.cabin_length_frac = get_field<double>(g, "cabin_length_frac");
    s.gt_shape.cabin_height_frac = get_field<double>(g, "cabin_height_frac");
    s.gt_shape.cabin_offset = get_field<double>(g, "cabin_offset");
    s.gt_shape.rounding = get_field<double>(g, "rounding");
    s.gt_shape.blend = get_field<double>(g, "blend");
    s.profile = motion_profile_from_string(get_field<std::string>(j, "profile"));
    const json& sn = j.at("sensor");
    const auto o = get_field<std::vector<double>>(sn, "origin");
    if (o.size() != 3) throw DataError("sensor origin must have 3 entries");
    s.sensor.origin = Eigen::Vector3d(o[0], o[1], o[2]);
    s.sensor.azimuth_resolution = get_field<double>(sn, "azimuth_resolution");
    s.sensor.elevation_rows = get_field<int>(sn, "elevation_rows");
    s.sensor.elevation_min = get_field<double>(sn, "elevation_min");
    s.sensor.elevation_max = get_field<double>(sn, "elevation_max");
    s.sensor.range_noise = get_field<double>(sn, "range_noise");
    s.sensor.dropout = get_field<double>(sn, "dropout");
    s.sensor.max_range = get_field<double>(sn, "max_range");
    s.sensor.ground_plane = get_field<bool>(sn, "ground_plane");
    s.sensor.ground_z = get_field<double>(sn, "ground_z");
    const json& dn = j.at("detection");
    s.detection.sigma_xyz = get_field<double>(dn, "sigma_xyz");
    s.detection.sigma_yaw = get_field<double>(dn, "sigma_yaw");
    s.detection.fn_prob = get_field<double>(dn, "fn_prob");
    s.detection.fp_rate = get_field<double>(dn, "fp_rate");
    s.detection.fp_radius = get_field<double>(dn, "fp_radius");
    s.has_detections = get_field<bool>(j, "has_detections");
    s.first_frame_points = get_field<int>(j, "first_frame_points");
    const json& frames = j.at("frames");
    if (!frames.is_array() || frames.size() != get_field<size_t>(j, "n_frames"))
      throw DataError("frame count does not match n_frames");
    for (const json& f : frames) {
      TrackletFrame tf;
      tf.gt_pose = pose_from(f.at("gt_pose"));
      tf.points.points = decode_points(get_field<std::string>(f, "points"), get_field<size_t>(f, "n_points"));
      tf.points.frame = Frame::World;
      for (const json& d : f.at("detections"))
        tf.detections.push_back({pose_from(d.at("pose")), get_field<double>(d, "score")});
      s.frames.push_back(std::move(tf));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed tracklet: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed tracklet: ") + e.what());
  }
  if (s.frames.empty()) throw DataError("tracklet has no frames");
  return s;
}

void save_tracklet(const std::string& path, const TrackletSequence& sequence) {
  write_file(path, serialize_tracklet(sequence));
}
TrackletSequence load_tracklet(const std::string& path) {
  return deserialize_tracklet(read_file(path));
}

ResultRecord make_pose_only_record(const TrackletSequence& sequence,
                                   const std::vector<Pose>& poses, const std::string& method) {
  ResultRecord r;
  r.tracklet = sequence.name;
  r.method = method;
  r.size = sequence.size;
  r.first_frame_points = sequence.first_frame_points;
  r.mean_distance = sequence.mean_distance();
  for (const auto& f : sequence.frames) r.gt.push_back(f.gt_pose);
  r.poses = poses;
  return r;
}

ResultRecord make_result_record(const TrackletSequence& sequence, const TrackResult& result,
                                const std::string& method) {
  ResultRecord r = make_pose_only_record(sequence, result.poses, method);
  for (const auto& z : result.codes) r.code_checksums.push_back(code_checksum(z));
  r.init_code = result.init_code;
  r.final_code = result.final_code;
  r.diagnostics = result.diagnostics;
  return r;
}

TrackletResult to_tracklet_result(const ResultRecord& record) {
  TrackletResult t = make_tracklet_result(record.tracklet, record.poses, record.gt, record.size,
                                          record.first_frame_points, record.mean_distance);
  if (record.shape_final) {
    t.has_shape = true;
    t.acd = record.shape_final->acd;
    t.recall = record.shape_final->recall;
  }
  return t;
}

std::string serialize_result(const ResultRecord& r) {
  ojson frames = ojson::array();
  for (size_t i = 0; i < r.poses.size(); ++i) {
    ojson f = {{"frame", i}, {"pose", pose_json(r.poses[i])}, {"gt_pose", pose_json(r.gt.at(i))}};
    f["code_checksum"] = i < r.code_checksums.size() ? ojson(r.code_checksums[i]) : ojson(nullptr);
    frames.push_back(f);
  }
  ojson diags = ojson::array();
  for (const auto& d : r.diagnostics) {
    diags.push_back({{"frame", d.frame},
                     {"crop_points", d.crop_points},
                     {"history_added", d.history_added},
                     {"history_size", d.history_size},
                     {"empty_crop", d.empty_crop},
                     {"detection_used", d.detection_used},
                     {"adapted", d.adapted},
                     {"gate", d.gate},
                     {"pose", optim_json(d.pose)},
                     {"code", optim_json(d.code)}});
  }
  ojson j = {{"schema_version", kResultSchemaVersion},
             {"tracklet", r.tracklet},
             {"method", r.method},
             {"size", size_json(r.size)},
             {"first_frame_points", r.first_frame_points},
             {"mean_distance", r.mean_distance},
             {"n_frames", r.poses.size()},
             {"frames", frames},
             {"init_code", code_json(r.init_code)},
             {"final_code", code_json(r.final_code)},
             {"shape_init", metrics_json(r.shape_init)},
             {"shape_final", metrics_json(r.shape_final)},
             {"diagnostics", diags}};
  return j.dump(1) + "\n";
}

ResultRecord deserialize_result(const std::string& text) {
  const json j = parse_json(text, "result");
  if (get_field<int>(j, "schema_version") != kResultSchemaVersion)
    throw DataError("unsupported result schema version");
  ResultRecord r;
  try {
    r.tracklet = get_field<std::string>(j, "tracklet");
    r.method = get_field<std::string>(j, "method");
    r.size = size_from(j.at("size"));
    r.first_frame_points = get_field<int>(j, "first_frame_points");
    r.mean_distance = get_field<double>(j, "mean_distance");
    const json& frames = j.at("frames");
    if (frames.size() != get_field<size_t>(j, "n_frames")) throw DataError("frame count mismatch");
    for (const json& f : frames) {
      r.poses.push_back(pose_from(f.at("pose")));
      r.gt.push_back(pose_from(f.at("gt_pose")));
      if (!f.at("code_checksum").is_null()) r.code_checksums.push_back(f.at("code_checksum").get<std::string>());
    }
    r.init_code = code_from(j.at("init_code"));
    r.final_code = code_from(j.at("final_code"));
    r.shape_init = metrics_from(j.at("shape_init"));
    r.shape_final = metrics_from(j.at("shape_final"));
    for (const json& d : j.at("diagnostics")) {
      FrameDiagnostics fd;
      fd.frame = get_field<int>(d, "frame");
      fd.crop_points = get_field<int>(d, "crop_points");
      fd.history_added = get_field<int>(d, "history_added");
      fd.history_size = get_field<int>(d, "history_size");
      fd.empty_crop = get_field<bool>(d, "empty_crop");
      fd.detection_used = get_field<bool>(d, "detection_used");
      fd.adapted = get_field<bool>(d, "adapted");
      fd.gate = get_field<std::string>(d, "gate");
      fd.pose = optim_from(d.at("pose"));
      fd.code = optim_from(d.at("code"));
      r.diagnostics.push_back(fd);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed result: ") + e.what());
  }
  if (r.poses.empty()) throw DataError("result has no frames");
  return r;
}

void save_result(const std::string& path, const ResultRecord& record) {
  write_file(path, serialize_result(record));
}
ResultRecord load_result(const std::string& path) { return deserialize_result(read_file(path)); }

}  // namespace imptrack
