#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "imptrack/common.hpp"
#include "imptrack/kalman.hpp"

using namespace imptrack;

namespace {

// Scalar position/velocity filter for one axis, written out by hand.
struct AxisFilter {
  double x, v, pxx = 0, pxv = 0, pvv;
  double dt, q;
  void predict() {
    x += dt * v;
    const double nxx = pxx + 2 * dt * pxv + dt * dt * pvv + q * std::pow(dt, 4) / 4;
    const double nxv = pxv + dt * pvv + q * std::pow(dt, 3) / 2;
    const double nvv = pvv + q * dt * dt;
    pxx = nxx;
    pxv = nxv;
    pvv = nvv;
  }
  void update(double m, double r) {
    const double s = pxx + r, kx = pxx / s, kv = pxv / s, y = m - x;
    x += kx * y;
    v += kv * y;
    // (I - KH) P (I - KH)^T + K R K^T
    const double nxx = (1 - kx) * (1 - kx) * pxx + kx * kx * r;
    const double nxv = (1 - kx) * (pxv - kv * pxx) + kx * kv * r;
    const double nvv = pvv - 2 * kv * pxv + kv * kv * pxx + kv * kv * r;
    pxx = nxx;
    pxv = nxv;
    pvv = nvv;
  }
};

TrackletSequence synthetic(int n, double vx, const DetectionNoise& noise, uint64_t seed) {
  TrackletSequence s;
  s.detection = noise;
  s.has_detections = true;
  for (int k = 0; k < n; ++k) {
    TrackletFrame f;
    f.gt_pose = Pose::make(10.0 + vx * 0.1 * k, 2.0 - 0.5 * 0.1 * k, -1.0, 0.2);
    f.detections = gen_detections(f.gt_pose, noise, mix_seed(seed, uint64_t(k)));
    s.frames.push_back(std::move(f));
  }
  return s;
}

}  // namespace

TEST_CASE("each axis matches a hand-written scalar filter") {
  KalmanConfig c;
  ConstantVelocityKalman kf(Pose::make(1.0, 2.0, 3.0, 0.1), c);
  AxisFilter ax{1.0, 0.0, 0, 0, c.initial_velocity_var, c.dt, c.accel_sigma * c.accel_sigma};
  AxisFilter ayaw{0.1, 0.0, 0, 0, c.initial_yaw_rate_var, c.dt,
                  c.yaw_accel_sigma * c.yaw_accel_sigma};
  Rng rng(4);
  for (int k = 0; k < 30; ++k) {
    kf.predict();
    ax.predict();
    ayaw.predict();
    const double mx = 1.0 + 0.3 * k + rng.normal(0, 0.1), myaw = 0.1 + 0.02 * k;
    kf.update(Pose::make(mx, 2.0, 3.0, myaw), 0.01, 0.0025);
    ax.update(mx, 0.01);
    ayaw.update(myaw, 0.0025);
    CHECK(kf.state()(0) == doctest::Approx(ax.x).epsilon(1e-10));
    CHECK(kf.state()(4) == doctest::Approx(ax.v).epsilon(1e-10));
    CHECK(kf.covariance()(0, 0) == doctest::Approx(ax.pxx).epsilon(1e-9));
    CHECK(kf.covariance()(0, 4) == doctest::Approx(ax.pxv).epsilon(1e-9));
    CHECK(kf.state()(3) == doctest::Approx(ayaw.x).epsilon(1e-10));
    // the filter stays symmetric and positive definite
    CHECK((kf.covariance() - kf.covariance().transpose()).norm() < 1e-12);
    CHECK(kf.covariance().llt().info() == Eigen::Success);
  }
}

TEST_CASE("noise-free detections are tracked exactly") {
  DetectionNoise none;
  none.sigma_xyz = 0.0;
  none.sigma_yaw = 0.0;
  none.fn_prob = 0.0;
  none.fp_rate = 0.0;
  const auto seq = synthetic(20, 8.0, none, 1);
  const auto poses = kf_baseline(seq);
  REQUIRE(poses.size() == 20);
  for (size_t k = 0; k < poses.size(); ++k)
    CHECK((poses[k].as_vector() - seq.frames[k].gt_pose.as_vector()).norm() < 1e-6);
}

TEST_CASE("without detections the initial pose is held") {
  DetectionNoise never;
  never.fn_prob = 1.0;
  never.fp_rate = 0.0;
  const auto seq = synthetic(10, 8.0, never, 2);
  for (const auto& p : kf_baseline(seq)) CHECK(p == seq.frames[0].gt_pose);
}

TEST_CASE("detections beyond the gate are ignored") {
  DetectionNoise none;
  none.sigma_xyz = 0.0;
  none.sigma_yaw = 0.0;
  none.fn_prob = 0.0;
  none.fp_rate = 0.0;
  auto seq = synthetic(3, 0.0, none, 3);
  seq.frames[1].detections = {{Pose::make(13.5, 2.0, -1.0, 0.2), 0.9}};
  const auto poses = kf_baseline(seq);
  CHECK(poses[1] == seq.frames[0].gt_pose);
}

TEST_CASE("yaw innovation is wrapped across the branch cut") {
  ConstantVelocityKalman kf(Pose::make(0, 0, 0, std::numbers::pi - 0.05), {});
  kf.predict();
  kf.update(Pose::make(0, 0, 0, -std::numbers::pi + 0.05), 1e-4, 1e-4);
  CHECK(kf.last_yaw_innovation() == doctest::Approx(0.1));
  const double yaw = kf.pose().yaw;
  CHECK(std::abs(wrap_angle(yaw - std::numbers::pi)) < 0.06);
  CHECK(yaw > -std::numbers::pi);
  CHECK(yaw <= std::numbers::pi);
}
