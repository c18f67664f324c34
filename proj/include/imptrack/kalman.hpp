#pragma once

#include <Eigen/Core>
#include <vector>

#include "imptrack/geometry.hpp"
#include "imptrack/lidar_sim.hpp"

namespace imptrack {

struct KalmanConfig {
  double dt = 0.1;
  double accel_sigma = 2.0;      // m/s^2, white-acceleration process noise
  double yaw_accel_sigma = 1.0;  // rad/s^2
  double initial_velocity_var = 25.0;
  double initial_yaw_rate_var = 1.0;
  double gate = 3.0;             // association radius, meters
  double min_measurement_var = 1e-12;
};

/// Constant-velocity filter over (x, y, z, yaw, vx, vy, vz, yaw_rate).
class ConstantVelocityKalman {
 public:
  using State = Eigen::Matrix<double, 8, 1>;
  using Cov = Eigen::Matrix<double, 8, 8>;

  ConstantVelocityKalman(const Pose& initial, const KalmanConfig& config);

  void predict();
  /// Measurement variances for (x, y, z) and yaw.
  void update(const Pose& measurement, double var_xyz, double var_yaw);

  Pose pose() const;
  const State& state() const { return x_; }
  const Cov& covariance() const { return P_; }
  /// Last yaw innovation, wrapped into (-pi, pi].
  double last_yaw_innovation() const { return last_yaw_innovation_; }

 private:
  KalmanConfig config_;
  State x_;
  Cov P_;
  double last_yaw_innovation_ = 0.0;
};

/// Detection-association baseline: predict each frame, update with the
/// nearest detection inside the gate, otherwise keep the prediction.
std::vector<Pose> kf_baseline(const TrackletSequence& sequence, const KalmanConfig& config = {});

}  // namespace imptrack
