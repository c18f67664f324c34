#include "imptrack/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "imptrack/common.hpp"
#include "imptrack/eval.hpp"

namespace imptrack {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class JsonReader {
 public:
  JsonReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  template <typename T>
  void field(const char* key, T& value) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      value = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for " + where(key) + ": " + e.what());
    }
  }
  void field(const char* key, double (&range)[2]) {
    std::array<double, 2> a{range[0], range[1]};
    field(key, a);
    range[0] = a[0];
    range[1] = a[1];
  }
  void field(const char* key, Eigen::Vector3d& v) {
    std::array<double, 3> a{v.x(), v.y(), v.z()};
    field(key, a);
    v = Eigen::Vector3d(a[0], a[1], a[2]);
  }
  template <typename F>
  void object(const char* key, F&& fn) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    JsonReader sub(j_.at(key), where(key));
    fn(sub);
    sub.finish();
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!known_.count(it.key())) throw ConfigError("unknown config key: " + where(it.key()));
  }

 private:
  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

class JsonWriter {
 public:
  template <typename T>
  void field(const char* key, T& value) {
    j_[key] = value;
  }
  void field(const char* key, double (&range)[2]) { j_[key] = {range[0], range[1]}; }
  void field(const char* key, Eigen::Vector3d& v) { j_[key] = {v.x(), v.y(), v.z()}; }
  template <typename F>
  void object(const char* key, F&& fn) {
    JsonWriter sub;
    fn(sub);
    j_[key] = sub.j_;
  }
  const ojson& json_value() const { return j_; }

 private:
  ojson j_ = ojson::object();
};

template <typename V>
void visit(V& v, TrackConfig& c) {
  v.field("delta", c.delta);
  v.field("lambda", c.lambda);
  v.field("gamma", c.gamma);
  v.field("pose_lr", c.pose_lr);
  v.field("code_lr", c.code_lr);
  v.field("pose_iters", c.pose_iters);
  v.field("pose_patience", c.pose_patience);
  v.field("pose_patience_tol", c.pose_patience_tol);
  v.field("code_iters", c.code_iters);
  v.field("adapt_max_points", c.adapt_max_points);
  v.field("min_adapt_points", c.min_adapt_points);
  v.field("crop_dilation", c.crop_dilation);
  v.field("history_voxel", c.history_voxel);
  v.field("detection_weight", c.detection_weight);
  v.field("detection_gate", c.detection_gate);
}

template <typename V>
void visit(V& v, AblationSwitches& a) {
  v.field("regularizer", a.regularizer);
  v.field("chamfer_loss", a.chamfer_loss);
  v.field("shape_loss", a.shape_loss);
  v.field("detection_loss", a.detection_loss);
  v.field("adapt_frames", a.adapt_frames);
}

template <typename V>
void visit(V& v, FamilyBounds& f) {
  v.field("width_ratio", f.width_ratio);
  v.field("height_ratio", f.height_ratio);
  v.field("cabin_length_frac", f.cabin_length_frac);
  v.field("cabin_height_frac", f.cabin_height_frac);
  v.field("cabin_offset", f.cabin_offset);
  v.field("rounding", f.rounding);
  v.field("blend", f.blend);
}

template <typename V>
void visit(V& v, TrainConfig& t) {
  v.field("code_dim", t.dims.code_dim);
  v.field("hidden", t.dims.hidden);
  v.field("samples_per_shape", t.samples_per_shape);
  v.field("scan_views", t.scan_views);
  v.field("scan_points_per_shape", t.scan_points_per_shape);
  v.field("scan_min_range", t.scan_min_range);
  v.field("scan_max_range", t.scan_max_range);
  v.field("nominal_diagonal", t.nominal_diagonal);
  v.field("epochs", t.epochs);
  v.field("batch_size", t.batch_size);
  v.field("learning_rate", t.learning_rate);
  v.field("code_reg", t.code_reg);
  v.field("code_init_sigma", t.code_init_sigma);
  v.field("delta", t.delta);
  v.object("sampling", [&](auto& s) {
    s.field("sigma_fine", t.sampling.sigma_fine);
    s.field("sigma_coarse", t.sampling.sigma_coarse);
    s.field("uniform_radius", t.sampling.uniform_radius);
  });
}

template <typename V>
void visit(V& v, SensorSpec& s) {
  v.field("origin", s.origin);
  v.field("azimuth_resolution_rad", s.azimuth_resolution);
  v.field("elevation_rows", s.elevation_rows);
  v.field("elevation_min_rad", s.elevation_min);
  v.field("elevation_max_rad", s.elevation_max);
  v.field("range_noise", s.range_noise);
  v.field("dropout", s.dropout);
  v.field("max_range", s.max_range);
  v.field("ground_plane", s.ground_plane);
  v.field("ground_z", s.ground_z);
}

template <typename V>
void visit(V& v, TrajectoryConfig& t) {
  v.field("center_z", t.center_z);
  v.field("min_start_range", t.min_start_range);
  v.field("max_start_range", t.max_start_range);
  v.field("min_speed", t.min_speed);
  v.field("max_speed", t.max_speed);
  v.field("max_yaw_rate", t.max_yaw_rate);
  v.field("min_clearance", t.min_clearance);
  v.field("frame_dt", t.frame_dt);
}

template <typename V>
void visit(V& v, DetectionNoise& d) {
  v.field("sigma_xyz", d.sigma_xyz);
  v.field("sigma_yaw", d.sigma_yaw);
  v.field("fn_prob", d.fn_prob);
  v.field("fp_rate", d.fp_rate);
  v.field("fp_radius", d.fp_radius);
}

template <typename V>
void visit(V& v, SuiteConfig& s) {
  v.field("n_tracklets", s.n_tracklets);
  v.field("seed", s.seed);
  TrackletConfig& t = s.tracklet;
  v.field("n_frames", t.n_frames);
  std::string profile = t.random_profile ? "random" : to_string(t.profile);
  v.field("profile", profile);
  if (profile == "random") {
    t.random_profile = true;
  } else {
    t.random_profile = false;
    try {
      t.profile = motion_profile_from_string(profile);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("bad motion profile: ") + e.what());
    }
  }
  v.field("min_length", t.min_length);
  v.field("max_length", t.max_length);
  v.field("with_detections", t.with_detections);
  v.object("sensor", [&](auto& sub) { visit(sub, t.sensor); });
  v.object("trajectory", [&](auto& sub) { visit(sub, t.trajectory); });
  v.object("detection", [&](auto& sub) { visit(sub, t.detection); });
}

template <typename V>
void visit(V& v, KalmanConfig& k) {
  v.field("dt", k.dt);
  v.field("accel_sigma", k.accel_sigma);
  v.field("yaw_accel_sigma", k.yaw_accel_sigma);
  v.field("initial_velocity_var", k.initial_velocity_var);
  v.field("initial_yaw_rate_var", k.initial_yaw_rate_var);
  v.field("gate", k.gate);
  v.field("min_measurement_var", k.min_measurement_var);
}

template <typename V>
void visit(V& v, MetricsConfig& m) {
  v.field("resolution", m.shape.resolution);
  v.field("surface_samples", m.shape.surface_samples);
  v.field("seed", m.shape.seed);
  v.field("recall_threshold", m.shape.recall_threshold);
  v.field("gt_voxel", m.gt_voxel);
}

template <typename V>
void visit(V& v, ExperimentConfig& c) {
  v.field("seed", c.seed);
  v.field("n_shapes", c.n_shapes);
  v.field("output_dir", c.output_dir);
  v.object("family", [&](auto& s) { visit(s, c.family); });
  v.object("pretrain", [&](auto& s) { visit(s, c.train); });
  v.object("suite", [&](auto& s) { visit(s, c.suite); });
  v.object("noisy_suite", [&](auto& s) { visit(s, c.noisy_suite); });
  v.object("track", [&](auto& s) { visit(s, c.track); });
  v.object("ablation", [&](auto& s) { visit(s, c.ablation); });
  v.object("kalman", [&](auto& s) { visit(s, c.kalman); });
  v.object("metrics", [&](auto& s) { visit(s, c.metrics); });
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

}  // namespace

TrackConfig AblationSwitches::apply(TrackConfig base) const {
  if (!regularizer) base.lambda = 0.0;
  if (!chamfer_loss) base.gamma = 0.0;
  base.shape_loss = shape_loss;
  base.use_detections = detection_loss;
  base.adapt_frames = adapt_frames;
  return base;
}

SuiteConfig high_noise_suite(SuiteConfig base) {
  base.tracklet.sensor.dropout = 0.2;
  base.tracklet.detection.sigma_xyz = 0.3;
  base.tracklet.with_detections = true;
  base.seed += 50000;
  return base;
}

ExperimentConfig::ExperimentConfig() { noisy_suite = high_noise_suite(suite); }

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("version")) throw ConfigError("config needs a version field");
  if (!j.at("version").is_number_integer() || j.at("version").get<int>() != kExperimentConfigVersion)
    throw ConfigError("unsupported config version");
  ExperimentConfig c;
  JsonReader r(j, "");
  int version = kExperimentConfigVersion;
  r.field("version", version);
  visit(r, c);
  r.finish();
  c.track.validate();
  c.track_config().validate();
  if (c.n_shapes < 1) throw ConfigError("n_shapes must be >= 1");
  if (c.suite.n_tracklets < 0 || c.noisy_suite.n_tracklets < 0)
    throw ConfigError("n_tracklets must be >= 0");
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_experiment_config(text);
}

std::string experiment_config_to_json(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  JsonWriter w;
  int version = kExperimentConfigVersion;
  w.field("version", version);
  visit(w, c);
  return w.json_value().dump(2) + "\n";
}

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  const size_t workers = std::min<size_t>(n, static_cast<size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::mutex mu;
  size_t failed_index = n;
  std::exception_ptr failure;
  auto work = [&]() {
    for (size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<AnalyticShape> training_shapes(const ExperimentConfig& config) {
  return sample_shape_family(mix_seed(config.seed, 1), config.n_shapes, config.family);
}

Pretrained pretrain(const ExperimentConfig& config) {
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  TrainResult r = train_auto_decoder(training_shapes(config), tc);
  Pretrained p;
  p.params = std::move(r.params);
  p.codes = std::move(r.codes);
  p.mean = mean_code(p.codes);
  p.loss_history = std::move(r.loss_history);
  return p;
}

std::vector<TrackletSequence> generate_suite(const SuiteConfig& suite, int jobs) {
  std::vector<TrackletSequence> out(static_cast<size_t>(std::max(0, suite.n_tracklets)));
  parallel_for(out.size(), jobs, [&](size_t i) { out[i] = gen_tracklet(suite.tracklet, suite.seed + i); });
  return out;
}

PointCloud gt_shape_points(const TrackletSequence& sequence, double voxel) {
  std::vector<Eigen::Matrix3Xd> parts;
  Eigen::Index total = 0;
  for (const auto& f : sequence.frames) {
    PointCloud c = crop_points(preprocess_frame(sequence, f.points), f.gt_pose, sequence.size, 1.0);
    total += c.size();
    parts.push_back(std::move(c.points));
  }
  Eigen::Matrix3Xd all(3, total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    all.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return voxel_downsample(PointCloud(std::move(all), Frame::Canonical), voxel);
}

ResultRecord run_tracker(const TrackletSequence& sequence, const Pretrained& prior,
                         const TrackConfig& config, const std::string& method,
                         const MetricsConfig& metrics, const RunOptions& options,
                         TrackResult* full) {
  TrackResult tr = track_sequence(sequence, prior.params, prior.mean, config);
  ResultRecord rec = make_result_record(sequence, tr, method);
  if (options.final_shape_metrics || options.init_shape_metrics) {
    const PointCloud gt = gt_shape_points(sequence, metrics.gt_voxel);
    if (!gt.empty()) {
      if (options.init_shape_metrics)
        rec.shape_init = shape_metrics(gt, prior.params, tr.init_code, sequence.size, metrics.shape);
      if (options.final_shape_metrics)
        rec.shape_final = shape_metrics(gt, prior.params, tr.final_code, sequence.size, metrics.shape);
    }
  }
  if (full) *full = std::move(tr);
  return rec;
}

ResultRecord run_kf(const TrackletSequence& sequence, const KalmanConfig& config) {
  return make_pose_only_record(sequence, kf_baseline(sequence, config), "kf");
}

int descent_violations(const ResultRecord& record) {
  int bad = 0;
  for (const auto& d : record.diagnostics) {
    if (d.pose.ran && d.pose.best_objective > d.pose.initial_objective) ++bad;
    if (d.code.ran && d.code.best_objective > d.code.initial_objective) ++bad;
  }
  return bad;
}

int gating_violations(const ResultRecord& record, int min_adapt_points) {
  int bad = 0;
  for (size_t i = 1; i < record.diagnostics.size() && i < record.code_checksums.size(); ++i)
    if (record.diagnostics[i].history_added < min_adapt_points &&
        record.code_checksums[i] != record.code_checksums[i - 1])
      ++bad;
  return bad;
}

VariantSummary summarize_variant(const std::string& name, const std::string& suite,
                                 std::vector<ResultRecord> records, int min_adapt_points,
                                 double seconds) {
  VariantSummary v;
  v.name = name;
  v.suite = suite;
  v.tracklets = static_cast<int>(records.size());
  v.seconds = seconds;
  std::vector<double> succ, prec, acc, rob, iou, err, acd_i, acd_f, rec_f;
  int improved = 0, compared = 0;
  for (const auto& r : records) {
    const TrackletResult t = to_tracklet_result(r);
    const auto sp = success_precision(t);
    const auto ar = accuracy_robustness(t);
    succ.push_back(sp.success);
    prec.push_back(sp.precision);
    acc.push_back(ar.accuracy);
    rob.push_back(ar.robustness);
    iou.push_back(mean_of(t.iou));
    err.push_back(mean_of(t.center_error));
    if (r.shape_init) acd_i.push_back(r.shape_init->acd);
    if (r.shape_final) {
      acd_f.push_back(r.shape_final->acd);
      rec_f.push_back(r.shape_final->recall);
    }
    if (r.shape_init && r.shape_final) {
      ++compared;
      if (r.shape_final->acd < r.shape_init->acd) ++improved;
    }
    v.descent_violations += descent_violations(r);
    v.gating_violations += gating_violations(r, min_adapt_points);
  }
  v.success = mean_of(succ);
  v.precision = mean_of(prec);
  v.accuracy = mean_of(acc);
  v.robustness = mean_of(rob);
  v.mean_iou = mean_of(iou);
  v.mean_center_error = mean_of(err);
  v.acd_init = mean_of(acd_i);
  v.acd_final = mean_of(acd_f);
  v.recall_final = mean_of(rec_f);
  v.acd_improved_fraction = compared ? double(improved) / double(compared) : kNaN;
  v.records = std::move(records);
  return v;
}

const VariantSummary& AblationReport::at(const std::string& name) const {
  for (const auto& v : variants)
    if (v.name == name) return v;
  throw std::out_of_range("no variant named " + name);
}

std::string AblationReport::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "version,variant,suite,tracklets,success,precision,accuracy,robustness,mean_iou,"
         "mean_center_error,acd_init,acd_final,recall_final,acd_improved_fraction,"
         "descent_violations,gating_violations\n";
  auto cell = [&](double x) {
    if (!std::isnan(x)) out << x;
  };
  for (const auto& v : variants) {
    out << kReportVersion << ',' << v.name << ',' << v.suite << ',' << v.tracklets << ',';
    for (double x : {v.success, v.precision, v.accuracy, v.robustness, v.mean_iou,
                     v.mean_center_error, v.acd_init, v.acd_final, v.recall_final,
                     v.acd_improved_fraction}) {
      cell(x);
      out << ',';
    }
    out << v.descent_violations << ',' << v.gating_violations << '\n';
  }
  return out.str();
}

std::string AblationReport::to_json() const {
  auto num = [](double x) { return std::isfinite(x) ? ojson(x) : ojson(nullptr); };
  ojson arr = ojson::array();
  for (const auto& v : variants) {
    arr.push_back({{"variant", v.name},
                   {"suite", v.suite},
                   {"tracklets", v.tracklets},
                   {"success", num(v.success)},
                   {"precision", num(v.precision)},
                   {"accuracy", num(v.accuracy)},
                   {"robustness", num(v.robustness)},
                   {"mean_iou", num(v.mean_iou)},
                   {"mean_center_error", num(v.mean_center_error)},
                   {"acd_init", num(v.acd_init)},
                   {"acd_final", num(v.acd_final)},
                   {"recall_final", num(v.recall_final)},
                   {"acd_improved_fraction", num(v.acd_improved_fraction)},
                   {"descent_violations", v.descent_violations},
                   {"gating_violations", v.gating_violations},
                   {"seconds", v.seconds}});
  }
  ojson j = {{"version", kReportVersion}, {"variants", arr}};
  return j.dump(2) + "\n";
}

AblationReport run_ablation_suite(const ExperimentConfig& config, const Pretrained& prior,
                                  int jobs, const std::string& out_dir,
                                  const std::function<void(const std::string&)>& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const auto regression = generate_suite(config.suite, jobs);
  const auto noisy = generate_suite(config.noisy_suite, jobs);

  struct Variant {
    std::string name;
    std::string suite;
    AblationSwitches switches;
    bool kf = false;
    RunOptions options;
  };
  const AblationSwitches base;
  auto with = [&](auto edit) {
    AblationSwitches s = base;
    edit(s);
    return s;
  };
  const RunOptions shape_both{true, true};
  const RunOptions shape_final{true, false};
  const RunOptions pose_only{false, false};
  const std::vector<Variant> variants = {
      {"full", "regression", base, false, shape_both},
      {"adapt_0", "regression", with([](auto& s) { s.adapt_frames = 0; }), false, shape_final},
      {"adapt_5", "regression", with([](auto& s) { s.adapt_frames = 5; }), false, pose_only},
      {"adapt_20", "regression", with([](auto& s) { s.adapt_frames = 20; }), false, pose_only},
      {"no_regularizer", "regression", with([](auto& s) { s.regularizer = false; }), false, pose_only},
      {"no_cd_loss", "regression", with([](auto& s) { s.chamfer_loss = false; }), false, pose_only},
      {"no_shape_loss", "regression", with([](auto& s) { s.shape_loss = false; }), false, pose_only},
      {"noisy_with_detections", "noisy", with([](auto& s) { s.detection_loss = true; }), false, pose_only},
      {"noisy_without_detections", "noisy", base, false, pose_only},
      {"noisy_kf", "noisy", base, true, pose_only},
  };

  AblationReport report;
  for (const auto& v : variants) {
    const auto& seqs = v.suite == "noisy" ? noisy : regression;
    const TrackConfig tc = v.switches.apply(config.track);
    std::vector<ResultRecord> records(seqs.size());
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(seqs.size(), jobs, [&](size_t i) {
      records[i] = v.kf ? run_kf(seqs[i], config.kalman)
                        : run_tracker(seqs[i], prior, tc, v.name, config.metrics, v.options);
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!out_dir.empty()) {
      const std::filesystem::path dir = std::filesystem::path(out_dir) / v.name;
      std::filesystem::create_directories(dir);
      for (const auto& r : records) save_result((dir / (r.tracklet + ".json")).string(), r);
    }
    report.variants.push_back(
        summarize_variant(v.name, v.suite, std::move(records), tc.min_adapt_points, secs));
    const auto& s = report.variants.back();
    std::ostringstream msg;
    msg.precision(4);
    msg << v.name << ": success " << s.success << " precision " << s.precision << " ("
        << secs << " s)";
    say(msg.str());
  }
  if (!out_dir.empty()) {
    write_file((std::filesystem::path(out_dir) / "ablation_report.csv").string(), report.to_csv());
    write_file((std::filesystem::path(out_dir) / "ablation_report.json").string(), report.to_json());
  }
  return report;
}

}  // namespace imptrack
