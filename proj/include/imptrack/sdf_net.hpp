#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <functional>
#include <string>

namespace imptrack {

inline constexpr int kDecoderLayers = 5;

struct DecoderDims {
  int code_dim = 64;
  int hidden = 128;
  bool operator==(const DecoderDims&) const = default;
};

using ShapeCode = Eigen::VectorXd;

/// Weights of the 5-layer ReLU MLP f(x, z) -> s. Layer 0 consumes [x; z];
/// layers 1..3 are hidden-to-hidden; layer 4 is a linear scalar head.
struct DecoderParams {
  DecoderDims dims;
  uint64_t seed = 0;
  std::array<Eigen::MatrixXd, kDecoderLayers> weights;
  std::array<Eigen::VectorXd, kDecoderLayers> biases;

  int input_dim() const { return 3 + dims.code_dim; }
  Eigen::Index parameter_count() const;
  /// Throws ConfigError if layer shapes do not chain or entries are not finite.
  void validate() const;
  DecoderParams zeros_like() const;
  bool operator==(const DecoderParams& other) const;
};

struct GradBundle {
  Eigen::Vector3d d_point = Eigen::Vector3d::Zero();
  Eigen::VectorXd d_code;
  DecoderParams d_params;
};

/// Xavier-uniform weights, zero biases; deterministic in `seed`.
DecoderParams init_params(uint64_t seed, const DecoderDims& dims);

double decoder_forward(const DecoderParams& params, const ShapeCode& z,
                       const Eigen::Vector3d& x);

/// Exact gradients of upstream * f(x, z; params).
GradBundle decoder_backward(const DecoderParams& params, const ShapeCode& z,
                            const Eigen::Vector3d& x, double upstream);

struct SmoothL1 {
  double value;
  double derivative;
};

/// Huber-form smooth l1: 0.5 r^2 / delta inside |r| < delta, |r| - delta / 2 outside.
SmoothL1 smooth_l1(double r, double delta);

/// Batched evaluation of f(., z) for a fixed code. The code's contribution to
/// the first layer is folded into its bias once, so per-point cost does not
/// depend on the code dimension. Holds the activations of the last
/// evaluate() call; one instance per thread.
class SdfField {
 public:
  SdfField(const DecoderParams& params, const ShapeCode& z);

  /// Forward pass over the columns of `x`.
  const Eigen::VectorXd& evaluate(const Eigen::Matrix3Xd& x);

  struct Gradients {
    Eigen::Matrix3Xd d_points;
    Eigen::VectorXd d_code;
  };
  /// Gradients of sum_i upstream_i * f(x_i, z) for the last evaluate() batch.
  Gradients backward(const Eigen::VectorXd& upstream, bool want_code = true) const;

  const DecoderParams& params() const { return *params_; }

 private:
  const DecoderParams* params_;
  Eigen::VectorXd first_bias_;
  std::array<Eigen::MatrixXd, kDecoderLayers - 1> act_;  // post-ReLU
  Eigen::VectorXd out_;
  mutable Eigen::MatrixXd grad_a_, grad_b_;  // backward workspaces
};

/// Per-sample inputs [x; z] as columns; gradients of sum_i upstream_i * f_i
/// with respect to every parameter and every input column.
struct BatchBackward {
  Eigen::VectorXd values;
  DecoderParams d_params;
  Eigen::MatrixXd d_inputs;
};
Eigen::VectorXd batch_forward(const DecoderParams& params, const Eigen::MatrixXd& inputs);
BatchBackward batch_forward_backward(const DecoderParams& params,
                                     const Eigen::MatrixXd& inputs,
                                     const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& upstream_of);

}  // namespace imptrack
