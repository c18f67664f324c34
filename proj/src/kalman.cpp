#include "imptrack/kalman.hpp"

#include <Eigen/Dense>

#include "imptrack/common.hpp"

namespace imptrack {

ConstantVelocityKalman::ConstantVelocityKalman(const Pose& initial, const KalmanConfig& config)
    : config_(config) {
  x_.setZero();
  x_.head<4>() = initial.as_vector();
  P_.setZero();
  for (int i = 4; i < 7; ++i) P_(i, i) = config.initial_velocity_var;
  P_(7, 7) = config.initial_yaw_rate_var;
}

void ConstantVelocityKalman::predict() {
  const double dt = config_.dt;
  Cov F = Cov::Identity();
  for (int i = 0; i < 4; ++i) F(i, i + 4) = dt;
  // discrete white-acceleration noise per axis
  Cov Q = Cov::Zero();
  const double dt2 = dt * dt, dt3 = dt2 * dt, dt4 = dt3 * dt;
  for (int i = 0; i < 4; ++i) {
    const double q = i < 3 ? config_.accel_sigma * config_.accel_sigma
                           : config_.yaw_accel_sigma * config_.yaw_accel_sigma;
    Q(i, i) = q * dt4 / 4.0;
    Q(i, i + 4) = Q(i + 4, i) = q * dt3 / 2.0;
    Q(i + 4, i + 4) = q * dt2;
  }
  x_ = F * x_;
  x_(3) = wrap_angle(x_(3));
  P_ = F * P_ * F.transpose() + Q;
}

void ConstantVelocityKalman::update(const Pose& measurement, double var_xyz, double var_yaw) {
  Eigen::Matrix<double, 4, 8> H = Eigen::Matrix<double, 4, 8>::Zero();
  H.leftCols<4>().setIdentity();
  Eigen::Vector4d innovation = measurement.as_vector() - x_.head<4>();
  innovation(3) = wrap_angle(innovation(3));
  last_yaw_innovation_ = innovation(3);
  Eigen::Matrix4d R = Eigen::Matrix4d::Zero();
  const double floor = config_.min_measurement_var;
  R(0, 0) = R(1, 1) = R(2, 2) = std::max(var_xyz, floor);
  R(3, 3) = std::max(var_yaw, floor);
  const Eigen::Matrix4d S = H * P_ * H.transpose() + R;
  const Eigen::Matrix<double, 8, 4> K = P_ * H.transpose() * S.inverse();
  x_ += K * innovation;
  x_(3) = wrap_angle(x_(3));
  // Joseph form keeps P symmetric positive semi-definite
  const Cov IKH = Cov::Identity() - K * H;
  P_ = IKH * P_ * IKH.transpose() + K * R * K.transpose();
}

Pose ConstantVelocityKalman::pose() const {
  return Pose::make(x_(0), x_(1), x_(2), x_(3));
}

std::vector<Pose> kf_baseline(const TrackletSequence& sequence, const KalmanConfig& config) {
  if (sequence.frames.empty()) return {};
  ConstantVelocityKalman kf(sequence.frames[0].gt_pose, config);
  const double var_xyz = sequence.detection.sigma_xyz * sequence.detection.sigma_xyz;
  const double var_yaw = sequence.detection.sigma_yaw * sequence.detection.sigma_yaw;
  std::vector<Pose> out;
  out.reserve(sequence.frames.size());
  out.push_back(kf.pose());
  for (size_t t = 1; t < sequence.frames.size(); ++t) {
    kf.predict();
    const Pose predicted = kf.pose();
    const Detection* best = nullptr;
    double best_d = config.gate;
    for (const auto& det : sequence.frames[t].detections) {
      const double d = (det.pose.translation() - predicted.translation()).norm();
      if (d < best_d) {
        best_d = d;
        best = &det;
      }
    }
    if (best) kf.update(best->pose, var_xyz, var_yaw);
    out.push_back(kf.pose());
  }
  return out;
}

}  // namespace imptrack
