#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "imptrack/common.hpp"
#include "imptrack/eval.hpp"
#include "imptrack/experiments.hpp"
#include "imptrack/io.hpp"
#include "imptrack/recon.hpp"

namespace fs = std::filesystem;
using namespace imptrack;

namespace {

struct Options {
  std::string config;
  std::optional<uint64_t> seed;
  int jobs = 1;
  std::optional<int> adapt_frames;
  bool no_regularizer = false;
  bool no_cd_loss = false;
  bool no_shape_loss = false;
  bool use_detections = false;
  int mesh_every = 0;

  std::string checkpoint;
  std::string codes;
  std::string tracklet;
  std::string results;
  std::string out;
  int count = 0;
  bool noisy = false;
};

ExperimentConfig load_config(const Options& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
  if (o.adapt_frames) c.ablation.adapt_frames = *o.adapt_frames;
  if (o.no_regularizer) c.ablation.regularizer = false;
  if (o.no_cd_loss) c.ablation.chamfer_loss = false;
  if (o.no_shape_loss) c.ablation.shape_loss = false;
  if (o.use_detections) c.ablation.detection_loss = true;
  c.track_config().validate();
  return c;
}

fs::path output_root(const ExperimentConfig& c) {
  if (const char* env = std::getenv("IMPTRACK_DATA_DIR"); env && *env) return fs::path(env);
  return fs::path(c.output_dir);
}

fs::path ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create directory " + p.string() + ": " + ec.message());
  return p;
}

Pretrained load_prior(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const std::string codes =
      o.codes.empty() ? (fs::path(o.checkpoint).parent_path() / "codes.json").string() : o.codes;
  Pretrained p;
  p.params = load_checkpoint(o.checkpoint);
  p.codes = load_code_table(codes);
  if (p.codes.empty()) throw DataError("code table is empty");
  if (p.codes.codes.front().size() != p.params.dims.code_dim)
    throw DataError("code table does not match the checkpoint's code dimension");
  p.mean = mean_code(p.codes);
  return p;
}

int cmd_pretrain(const Options& o) {
  ExperimentConfig c = load_config(o);
  if (o.seed) c.seed = *o.seed;
  const fs::path dir = ensure_dir(o.out.empty() ? output_root(c) / "prior" : fs::path(o.out));
  const Pretrained p = pretrain(c);
  save_checkpoint((dir / "decoder.ckpt").string(), p.params);
  save_code_table((dir / "codes.json").string(), p.codes);
  save_loss_csv((dir / "loss.csv").string(), p.loss_history);
  write_file((dir / "config.json").string(), experiment_config_to_json(c));
  std::cout << "checkpoint " << (dir / "decoder.ckpt").string() << " digest "
            << file_digest((dir / "decoder.ckpt").string()) << "\n"
            << "final loss " << p.loss_history.back() << "\n";
  return 0;
}

int cmd_gen_data(const Options& o) {
  ExperimentConfig c = load_config(o);
  SuiteConfig suite = o.noisy ? c.noisy_suite : c.suite;
  if (o.seed) suite.seed = *o.seed;
  if (o.count > 0) suite.n_tracklets = o.count;
  const fs::path dir = ensure_dir(o.out.empty() ? output_root(c) / "tracklets" : fs::path(o.out));
  const auto seqs = generate_suite(suite, o.jobs);
  for (const auto& s : seqs) {
    const std::string path = (dir / (s.name + ".json")).string();
    save_tracklet(path, s);
    std::cout << path << " " << file_digest(path) << "\n";
  }
  return 0;
}

fs::path result_path(const Options& o, const ExperimentConfig& c, const TrackletSequence& s,
                     const std::string& method) {
  if (!o.out.empty()) {
    ensure_dir(fs::path(o.out).parent_path().empty() ? fs::path(".") : fs::path(o.out).parent_path());
    return fs::path(o.out);
  }
  return ensure_dir(output_root(c) / "results" / method) / (s.name + ".json");
}

int cmd_track(const Options& o) {
  const ExperimentConfig c = load_config(o);
  if (o.tracklet.empty()) throw ConfigError("--tracklet is required");
  if (o.mesh_every < 0) throw ConfigError("--mesh-every must be >= 0");
  const Pretrained prior = load_prior(o);
  const TrackletSequence seq = load_tracklet(o.tracklet);
  TrackResult full;
  const ResultRecord rec = run_tracker(seq, prior, c.track_config(), "tracker", c.metrics,
                                       RunOptions{true, true}, &full);
  const fs::path path = result_path(o, c, seq, "tracker");
  save_result(path.string(), rec);
  if (o.mesh_every > 0) {
    const fs::path mesh_dir = ensure_dir(path.parent_path() / (seq.name + "_meshes"));
    for (size_t f = 0; f < full.codes.size(); f += size_t(o.mesh_every)) {
      const TriMesh mesh = marching_cubes(prior.params, full.codes[f], 64);
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04zu.ply", f);
      write_ply((mesh_dir / name).string(), mesh);
    }
  }
  std::cout << path.string() << "\n";
  return 0;
}

int cmd_kf(const Options& o) {
  const ExperimentConfig c = load_config(o);
  if (o.tracklet.empty()) throw ConfigError("--tracklet is required");
  const TrackletSequence seq = load_tracklet(o.tracklet);
  const fs::path path = result_path(o, c, seq, "kf");
  save_result(path.string(), run_kf(seq, c.kalman));
  std::cout << path.string() << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.results.empty()) throw ConfigError("--results is required");
  if (!fs::is_directory(o.results)) throw DataError("not a directory: " + o.results);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.results))
    if (e.is_regular_file() && e.path().extension() == ".json" &&
        e.path().filename().string().rfind("report", 0) != 0)
      files.push_back(e.path());
  if (files.empty()) throw DataError("no result files in " + o.results);
  std::sort(files.begin(), files.end());
  std::vector<TrackletResult> results;
  for (const auto& f : files) results.push_back(to_tracklet_result(load_result(f.string())));
  const Report report = aggregate_report(results);
  const fs::path dir = o.out.empty() ? fs::path(o.results) : ensure_dir(o.out);
  write_file((dir / "report.csv").string(), report.to_csv());
  write_file((dir / "report.json").string(), report.to_json());
  std::cout << report.to_csv();
  return 0;
}

int cmd_ablation_suite(const Options& o) {
  ExperimentConfig c = load_config(o);
  if (o.seed) c.seed = *o.seed;
  const fs::path dir = ensure_dir(o.out.empty() ? output_root(c) / "ablation" : fs::path(o.out));
  Pretrained prior;
  if (!o.checkpoint.empty()) {
    prior = load_prior(o);
  } else {
    std::cerr << "pretraining decoder\n";
    prior = pretrain(c);
    save_checkpoint((dir / "decoder.ckpt").string(), prior.params);
    save_code_table((dir / "codes.json").string(), prior.codes);
    save_loss_csv((dir / "loss.csv").string(), prior.loss_history);
  }
  write_file((dir / "config.json").string(), experiment_config_to_json(c));
  const AblationReport report = run_ablation_suite(
      c, prior, o.jobs, dir.string(), [](const std::string& s) { std::cerr << s << "\n"; });
  std::cout << report.to_csv();
  return 0;
}

int fail(const char* tag, int code, const std::string& what) {
  std::cerr << "error[" << tag << "]: " << what << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint single-object tracking and implicit shape reconstruction"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config JSON");
    sub->add_option("--seed", o.seed, "Seed override");
    sub->add_option("--jobs", o.jobs, "Parallel tracklets")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "Output path");
  };
  auto tracking = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "Decoder checkpoint");
    sub->add_option("--codes", o.codes, "Code table (default: codes.json next to the checkpoint)");
    sub->add_option("--adapt-frames", o.adapt_frames, "Frames receiving shape updates (0 = mean shape)");
    sub->add_flag("--no-regularizer", o.no_regularizer, "Drop the code regularizer");
    sub->add_flag("--no-cd-loss", o.no_cd_loss, "Drop the Chamfer term");
    sub->add_flag("--no-shape-loss", o.no_shape_loss, "Drop the SDF term");
    sub->add_flag("--use-detections", o.use_detections, "Add the detection loss");
  };

  auto* pre = app.add_subcommand("pretrain", "Train the decoder and shape codes");
  common(pre);
  auto* gen = app.add_subcommand("gen-data", "Generate synthetic tracklets");
  common(gen);
  gen->add_option("--n", o.count, "Number of tracklets")->check(CLI::NonNegativeNumber);
  gen->add_flag("--noisy", o.noisy, "Use the high-noise suite settings");
  auto* trk = app.add_subcommand("track", "Track one tracklet");
  common(trk);
  tracking(trk);
  trk->add_option("--tracklet", o.tracklet, "Tracklet JSON")->required();
  trk->add_option("--mesh-every", o.mesh_every, "Write a PLY mesh every N frames");
  auto* ev = app.add_subcommand("eval", "Aggregate result files into a report");
  ev->add_option("--results", o.results, "Directory of result JSON files")->required();
  ev->add_option("--out", o.out, "Report directory (default: the results directory)");
  auto* kf = app.add_subcommand("kf", "Kalman-filter detection baseline");
  common(kf);
  kf->add_option("--tracklet", o.tracklet, "Tracklet JSON")->required();
  auto* abl = app.add_subcommand("ablation-suite", "Run the ablation matrix");
  common(abl);
  abl->add_option("--checkpoint", o.checkpoint, "Reuse a decoder checkpoint");
  abl->add_option("--codes", o.codes, "Code table for --checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", 1, e.what());
  }

  try {
    if (*pre) return cmd_pretrain(o);
    if (*gen) return cmd_gen_data(o);
    if (*trk) return cmd_track(o);
    if (*ev) return cmd_eval(o);
    if (*kf) return cmd_kf(o);
    if (*abl) return cmd_ablation_suite(o);
  } catch (const ConfigError& e) {
    return fail("config", 1, e.what());
  } catch (const DataError& e) {
    return fail("data", 2, e.what());
  } catch (const NumericError& e) {
    return fail("numeric", 3, e.what());
  } catch (const std::exception& e) {
    return fail("data", 2, e.what());
  }
  return fail("usage", 1, "no command");
}
