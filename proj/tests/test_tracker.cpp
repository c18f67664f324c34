#include <doctest.h>

#include <cmath>

#include "imptrack/common.hpp"
#include "imptrack/prior_train.hpp"
#include "imptrack/recon.hpp"
#include "imptrack/tracker.hpp"

using namespace imptrack;

namespace {

struct Prior {
  TrainResult train;
  ShapeCode mean;
};

const Prior& tiny_prior() {
  static const Prior p = [] {
    TrainConfig c;
    c.dims = DecoderDims{8, 32};
    c.samples_per_shape = 2048;
    c.scan_views = 0;
    c.epochs = 40;
    c.learning_rate = 1e-3;
    Prior out;
    out.train = train_auto_decoder(sample_shape_family(21, 2), c);
    out.mean = mean_code(out.train.codes);
    return out;
  }();
  return p;
}

// Points on the decoder's zero level set, in the canonical metric frame.
Eigen::Matrix3Xd decoder_surface_points(const DecoderParams& params, const ShapeCode& z,
                                        const BoxSize& size, int n) {
  const TriMesh mesh = marching_cubes(params, z, 48);
  REQUIRE(!mesh.empty());
  Eigen::Matrix3Xd u = sample_surface(mesh, n, 4).points;
  SdfField field(params, z);
  for (int k = 0; k < 8; ++k) {
    const Eigen::VectorXd f = field.evaluate(u);
    const Eigen::Matrix3Xd g = field.backward(Eigen::VectorXd::Ones(u.cols()), false).d_points;
    for (Eigen::Index i = 0; i < u.cols(); ++i)
      u.col(i) -= f(i) * g.col(i) / std::max(1e-12, g.col(i).squaredNorm());
  }
  CHECK(field.evaluate(u).cwiseAbs().maxCoeff() < 1e-8);
  return u / normalization_scale(size);
}

TrackletSequence short_tracklet(uint64_t seed, int frames) {
  TrackletConfig cfg;
  cfg.n_frames = frames;
  return gen_tracklet(cfg, seed);
}

}  // namespace

TEST_CASE("config validation") {
  TrackConfig c;
  CHECK_NOTHROW(c.validate());
  c.pose_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrackConfig{};
  c.adapt_frames = -2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrackConfig{};
  c.history_voxel = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("detection association gate") {
  const Pose p = Pose::make(10, 0, -1, 0);
  CHECK_FALSE(associate_detection({}, p).has_value());
  const std::vector<Detection> inside{{Pose::make(12.9, 0, -1, 0), 0.9}};
  const std::vector<Detection> outside{{Pose::make(10, 3.1, -1, 0), 0.9}};
  REQUIRE(associate_detection(inside, p, 3.0).has_value());
  CHECK(associate_detection(inside, p, 3.0)->tx == 12.9);
  CHECK_FALSE(associate_detection(outside, p, 3.0).has_value());
  const std::vector<Detection> both{{Pose::make(11.5, 0, -1, 0), 0.9},
                                    {Pose::make(10.4, 0.2, -1, 0.1), 0.9},
                                    {Pose::make(8.8, 0, -1, 0), 0.9}};
  CHECK(associate_detection(both, p, 3.0)->tx == 10.4);
}

TEST_CASE("history aggregation") {
  Rng rng(3);
  HistoryBuffer h;
  std::vector<Eigen::Matrix3Xd> crops;
  for (int f = 0; f < 3; ++f) {
    Eigen::Matrix3Xd pts(3, 200);
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
      pts.col(i) << rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-0.7, 0.7);
    crops.push_back(pts);
    h = update_history(h, PointCloud(pts, Frame::Canonical), 0.05);
  }
  CHECK(h.frame_counts == std::vector<int>{200, 200, 200});
  CHECK(h.points.size() <= 600);
  // every observation stays represented within one voxel diagonal
  for (const auto& c : crops)
    for (Eigen::Index i = 0; i < c.cols(); ++i) {
      const Eigen::Vector3d q = c.col(i);
      CHECK(h.index.nearest(q).second <= 3 * 0.05 * 0.05 + 1e-12);
    }
  // re-adding a frame cannot push the density past one point per voxel
  const HistoryBuffer twice = update_history(h, PointCloud(crops[0], Frame::Canonical), 0.05);
  CHECK(twice.points.size() <= h.points.size() + crops[0].cols());
  const double cells = (4.0 / 0.05 + 1) * (2.0 / 0.05 + 1) * (1.4 / 0.05 + 1);
  CHECK(double(twice.points.size()) <= cells);
  Eigen::Matrix3Xd dense(3, 4000);
  for (Eigen::Index i = 0; i < dense.cols(); ++i)
    dense.col(i) << rng.uniform(0, 0.1), rng.uniform(0, 0.1), rng.uniform(0, 0.1);
  HistoryBuffer d = update_history({}, PointCloud(dense, Frame::Canonical), 0.05);
  d = update_history(d, PointCloud(dense, Frame::Canonical), 0.05);
  CHECK(d.points.size() <= 27);
  const HistoryBuffer same = update_history(h, PointCloud(Eigen::Matrix3Xd(3, 0), Frame::Canonical), 0.05);
  CHECK(same.points.points == h.points.points);
  CHECK(same.frame_counts == h.frame_counts);
}

TEST_CASE("code objective gradient matches finite differences") {
  const Prior& p = tiny_prior();
  TrackConfig c;
  Rng rng(5);
  Eigen::Matrix3Xd u(3, 50);
  for (Eigen::Index i = 0; i < u.cols(); ++i)
    u.col(i) << rng.uniform(-0.9, 0.9), rng.uniform(-0.4, 0.4), rng.uniform(-0.3, 0.3);
  ShapeCode z = p.train.codes.codes[0];
  const auto obj = code_objective(p.train.params, z, u, c);
  const double h = 1e-6;
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    ShapeCode a = z, b = z;
    a[k] += h;
    b[k] -= h;
    const double fd = (code_objective(p.train.params, a, u, c).value -
                       code_objective(p.train.params, b, u, c).value) / (2 * h);
    CHECK(obj.gradient[k] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
  }
  // without the data term only the regularizer remains
  c.shape_loss = false;
  const auto reg = code_objective(p.train.params, z, u, c);
  CHECK(reg.value == doctest::Approx(c.lambda * z.squaredNorm() / double(z.size())));
}

TEST_CASE("pose objective gradient matches finite differences") {
  const Prior& p = tiny_prior();
  const TrackletSequence seq = short_tracklet(77, 3);
  TrackConfig c;
  c.use_detections = true;
  HistoryBuffer h;
  h = update_history(h, crop_points(seq.frames[0].points, seq.frames[0].gt_pose, seq.size, 1.25),
                     c.history_voxel);
  const Pose gt = seq.frames[1].gt_pose;
  const auto world = crop_points(seq.frames[1].points, gt, seq.size, 1.25).points;
  REQUIRE(world.cols() > 10);
  SdfField field(p.train.params, p.mean);
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose at = Pose::make(gt.tx + rng.uniform(-0.2, 0.2), gt.ty + rng.uniform(-0.2, 0.2),
                               gt.tz + rng.uniform(-0.1, 0.1), gt.yaw + rng.uniform(-0.1, 0.1));
    // detection away from the l1 kinks
    const Pose det = Pose::make(at.tx + 0.5, at.ty - 0.5, at.tz + 0.5, at.yaw - 0.5);
    const auto obj = pose_objective(field, world, at, seq.size, h, det, c);
    const double eps = 1e-6;
    for (int k = 0; k < 4; ++k) {
      Eigen::Vector4d a = at.as_vector(), b = a;
      a[k] += eps;
      b[k] -= eps;
      const double fd = (pose_objective(field, world, Pose::from_vector(a), seq.size, h, det, c).value -
                         pose_objective(field, world, Pose::from_vector(b), seq.size, h, det, c).value) /
                        (2 * eps);
      // nearest-neighbour switches make the Chamfer term piecewise; allow a loose bound
      CHECK(obj.gradient[k] == doctest::Approx(fd).epsilon(1e-3).scale(1e-3));
    }
  }
}

TEST_CASE("pose step returns the best evaluated iterate") {
  const Prior& p = tiny_prior();
  const TrackletSequence seq = short_tracklet(91, 4);
  TrackConfig c;
  HistoryBuffer h = update_history(
      {}, crop_points(seq.frames[0].points, seq.frames[0].gt_pose, seq.size, 1.25), c.history_voxel);
  for (double lr : {0.1, 5.0}) {
    c.pose_lr = lr;
    const auto est = estimate_pose(seq.frames[1].points, seq.frames[0].gt_pose, seq.size, p.mean,
                                   h, nullptr, p.train.params, c);
    REQUIRE(est.diag.ran);
    CHECK(est.diag.best_objective <= est.diag.initial_objective);
    const auto kept = crop_indices(seq.frames[1].points, seq.frames[0].gt_pose, seq.size, 1.25);
    Eigen::Matrix3Xd world(3, Eigen::Index(kept.size()));
    for (size_t k = 0; k < kept.size(); ++k) world.col(Eigen::Index(k)) = seq.frames[1].points.points.col(kept[k]);
    SdfField field(p.train.params, p.mean);
    const auto at = pose_objective(field, world, est.pose, seq.size, h, std::nullopt, c, false);
    CHECK(at.value == est.diag.best_objective);
  }
}

TEST_CASE("a pose on the decoder surface is a fixed point") {
  const Prior& p = tiny_prior();
  const BoxSize size{1.5, 1.8, 4.4};
  const Pose pose = Pose::make(15.0, -4.0, -1.05, 0.4);
  const Eigen::Matrix3Xd q = decoder_surface_points(p.train.params, p.mean, size, 300);
  const PointCloud frame(canonical_to_world(pose, q), Frame::World);
  TrackConfig c;
  c.gamma = 0.0;
  const auto est = estimate_pose(frame, pose, size, p.mean, {}, nullptr, p.train.params, c);
  CHECK(est.diag.initial_objective < 1e-12);
  CHECK((est.pose.as_vector() - pose.as_vector()).norm() < 1e-6);
}

TEST_CASE("shape step gating and best iterate") {
  const Prior& p = tiny_prior();
  const BoxSize size{1.5, 1.8, 4.4};
  TrackConfig c;
  c.code_lr = 0.5;
  HistoryBuffer h = update_history(
      {}, PointCloud(decoder_surface_points(p.train.params, p.train.codes.codes[1], size, 400),
                     Frame::Canonical),
      c.history_voxel);
  const ShapeCode z0 = p.train.codes.codes[0];
  const auto gated = adapt_code(h, c.min_adapt_points - 1, z0, size, p.train.params, c);
  CHECK_FALSE(gated.adapted);
  CHECK(code_checksum(gated.code) == code_checksum(z0));
  const auto ran = adapt_code(h, c.min_adapt_points, z0, size, p.train.params, c);
  CHECK(ran.adapted);
  CHECK(ran.diag.best_objective <= ran.diag.initial_objective);
  CHECK(ran.diag.best_objective < ran.diag.initial_objective);
  CHECK_THROWS_AS(init_shape_code(PointCloud(Eigen::Matrix3Xd(3, 0), Frame::Canonical), size,
                                  p.train.params, z0, c),
                  std::invalid_argument);
}

TEST_CASE("sequence tracking is deterministic and respects the shape-step switches") {
  const Prior& p = tiny_prior();
  const TrackletSequence seq = short_tracklet(123, 6);
  TrackConfig c;
  c.pose_iters = 40;
  c.code_lr = 0.05;
  const TrackResult a = track_sequence(seq, p.train.params, p.mean, c);
  const TrackResult b = track_sequence(seq, p.train.params, p.mean, c);
  REQUIRE(a.poses.size() == seq.frames.size());
  CHECK(a.poses[0] == seq.frames[0].gt_pose);
  for (size_t t = 0; t < a.poses.size(); ++t) {
    CHECK(a.poses[t] == b.poses[t]);
    CHECK(code_checksum(a.codes[t]) == code_checksum(b.codes[t]));
  }
  // codes only change on frames that passed the gate
  for (size_t t = 1; t < a.codes.size(); ++t)
    if (a.diagnostics[t].history_added < c.min_adapt_points)
      CHECK(code_checksum(a.codes[t]) == code_checksum(a.codes[t - 1]));

  c.adapt_frames = 0;
  const TrackResult frozen = track_sequence(seq, p.train.params, p.mean, c);
  for (const auto& z : frozen.codes) CHECK(code_checksum(z) == code_checksum(p.mean));
  c.adapt_frames = 2;
  const TrackResult two = track_sequence(seq, p.train.params, p.mean, c);
  for (size_t t = 2; t < two.codes.size(); ++t)
    CHECK(code_checksum(two.codes[t]) == code_checksum(two.codes[1]));
  CHECK(two.diagnostics[3].gate == "disabled");
}
