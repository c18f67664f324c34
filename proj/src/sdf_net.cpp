#include "imptrack/sdf_net.hpp"

#include <cmath>

#include "imptrack/common.hpp"

namespace imptrack {

namespace {

std::array<std::pair<int, int>, kDecoderLayers> layer_shapes(const DecoderDims& d) {
  const int in = 3 + d.code_dim;
  const int h = d.hidden;
  return {{{h, in}, {h, h}, {h, h}, {h, h}, {1, h}}};
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& a) { return a.cwiseMax(0.0); }

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& grad) {
  return (pre.array() > 0.0).select(grad, 0.0);
}

}  // namespace

Eigen::Index DecoderParams::parameter_count() const {
  Eigen::Index n = 0;
  for (int l = 0; l < kDecoderLayers; ++l) n += weights[l].size() + biases[l].size();
  return n;
}

void DecoderParams::validate() const {
  if (dims.code_dim < 0 || dims.hidden < 1) throw ConfigError("decoder: invalid dims");
  const auto shapes = layer_shapes(dims);
  for (int l = 0; l < kDecoderLayers; ++l) {
    if (weights[l].rows() != shapes[l].first || weights[l].cols() != shapes[l].second ||
        biases[l].size() != shapes[l].first) {
      throw ConfigError("decoder: layer " + std::to_string(l) + " has inconsistent shape");
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw ConfigError("decoder: layer " + std::to_string(l) + " has non-finite entries");
    }
  }
}

DecoderParams DecoderParams::zeros_like() const {
  DecoderParams z;
  z.dims = dims;
  z.seed = seed;
  for (int l = 0; l < kDecoderLayers; ++l) {
    z.weights[l] = Eigen::MatrixXd::Zero(weights[l].rows(), weights[l].cols());
    z.biases[l] = Eigen::VectorXd::Zero(biases[l].size());
  }
  return z;
}

bool DecoderParams::operator==(const DecoderParams& other) const {
  if (!(dims == other.dims) || seed != other.seed) return false;
  for (int l = 0; l < kDecoderLayers; ++l) {
    if (weights[l].rows() != other.weights[l].rows() ||
        weights[l].cols() != other.weights[l].cols() ||
        biases[l].size() != other.biases[l].size())
      return false;
    if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
  }
  return true;
}

DecoderParams init_params(uint64_t seed, const DecoderDims& dims) {
  if (dims.code_dim < 0 || dims.hidden < 1) throw ConfigError("init_params: invalid dims");
  DecoderParams p;
  p.dims = dims;
  p.seed = seed;
  Rng rng(seed);
  const auto shapes = layer_shapes(dims);
  for (int l = 0; l < kDecoderLayers; ++l) {
    const auto [rows, cols] = shapes[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    p.weights[l].resize(rows, cols);
    // row-major fill order so the draw sequence matches the checkpoint layout
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) p.weights[l](r, c) = rng.uniform(-bound, bound);
    p.biases[l] = Eigen::VectorXd::Zero(rows);
  }
  return p;
}

namespace {

void check_code(const DecoderParams& params, const ShapeCode& z) {
  if (z.size() != params.dims.code_dim) {
    throw ConfigError("decoder: code dimension " + std::to_string(z.size()) +
                      " does not match decoder code dimension " +
                      std::to_string(params.dims.code_dim));
  }
}

}  // namespace

double decoder_forward(const DecoderParams& params, const ShapeCode& z,
                       const Eigen::Vector3d& x) {
  check_code(params, z);
  Eigen::VectorXd in(params.input_dim());
  in << x, z;
  return batch_forward(params, in)(0);
}

GradBundle decoder_backward(const DecoderParams& params, const ShapeCode& z,
                            const Eigen::Vector3d& x, double upstream) {
  check_code(params, z);
  Eigen::MatrixXd in(params.input_dim(), 1);
  in.col(0) << x, z;
  auto bb = batch_forward_backward(params, in, [upstream](const Eigen::VectorXd& v) {
    return Eigen::VectorXd::Constant(v.size(), upstream);
  });
  GradBundle g;
  g.d_point = bb.d_inputs.col(0).head<3>();
  g.d_code = bb.d_inputs.col(0).tail(params.dims.code_dim);
  g.d_params = std::move(bb.d_params);
  return g;
}

SmoothL1 smooth_l1(double r, double delta) {
  const double a = std::abs(r);
  if (a < delta) return {0.5 * r * r / delta, r / delta};
  return {a - 0.5 * delta, r > 0.0 ? 1.0 : -1.0};
}

Eigen::VectorXd batch_forward(const DecoderParams& params, const Eigen::MatrixXd& inputs) {
  Eigen::MatrixXd h = relu((params.weights[0] * inputs).colwise() + params.biases[0]);
  for (int l = 1; l < kDecoderLayers - 1; ++l) {
    h = relu((params.weights[l] * h).colwise() + params.biases[l]);
  }
  Eigen::RowVectorXd out = params.weights[4] * h;
  out.array() += params.biases[4](0);
  return out.transpose();
}

BatchBackward batch_forward_backward(
    const DecoderParams& params, const Eigen::MatrixXd& inputs,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& upstream_of) {
  std::array<Eigen::MatrixXd, kDecoderLayers - 1> pre;
  std::array<Eigen::MatrixXd, kDecoderLayers - 1> act;
  pre[0] = (params.weights[0] * inputs).colwise() + params.biases[0];
  act[0] = relu(pre[0]);
  for (int l = 1; l < kDecoderLayers - 1; ++l) {
    pre[l] = (params.weights[l] * act[l - 1]).colwise() + params.biases[l];
    act[l] = relu(pre[l]);
  }
  Eigen::RowVectorXd out = params.weights[4] * act[3];
  out.array() += params.biases[4](0);

  BatchBackward r;
  r.values = out.transpose();
  const Eigen::VectorXd up = upstream_of(r.values);
  r.d_params = params.zeros_like();

  const Eigen::RowVectorXd g_out = up.transpose();
  r.d_params.weights[4] = g_out * act[3].transpose();
  r.d_params.biases[4](0) = g_out.sum();
  Eigen::MatrixXd g = params.weights[4].transpose() * g_out;
  for (int l = kDecoderLayers - 2; l >= 0; --l) {
    g = relu_mask(pre[l], g);
    const Eigen::MatrixXd& below = l == 0 ? inputs : act[l - 1];
    r.d_params.weights[l] = g * below.transpose();
    r.d_params.biases[l] = g.rowwise().sum();
    g = params.weights[l].transpose() * g;
  }
  r.d_inputs = std::move(g);
  return r;
}

SdfField::SdfField(const DecoderParams& params, const ShapeCode& z) : params_(&params) {
  check_code(params, z);
  first_bias_ = params.biases[0];
  if (params.dims.code_dim > 0) {
    first_bias_ += params.weights[0].rightCols(params.dims.code_dim) * z;
  }
}

const Eigen::VectorXd& SdfField::evaluate(const Eigen::Matrix3Xd& x) {
  const auto& p = *params_;
  act_[0].noalias() = p.weights[0].leftCols<3>() * x;
  act_[0].colwise() += first_bias_;
  act_[0] = act_[0].cwiseMax(0.0);
  for (int l = 1; l < kDecoderLayers - 1; ++l) {
    act_[l].noalias() = p.weights[l] * act_[l - 1];
    act_[l].colwise() += p.biases[l];
    act_[l] = act_[l].cwiseMax(0.0);
  }
  out_.resize(x.cols());
  out_.transpose().noalias() = p.weights[4] * act_[3];
  out_.array() += p.biases[4](0);
  return out_;
}

SdfField::Gradients SdfField::backward(const Eigen::VectorXd& upstream, bool want_code) const {
  const auto& p = *params_;
  // act > 0 exactly where the pre-activation is positive, so it doubles as the ReLU mask.
  grad_a_.noalias() = p.weights[4].transpose() * upstream.transpose();
  for (int l = kDecoderLayers - 2; l >= 1; --l) {
    grad_a_ = (act_[l].array() > 0.0).select(grad_a_, 0.0);
    grad_b_.noalias() = p.weights[l].transpose() * grad_a_;
    grad_a_.swap(grad_b_);
  }
  grad_a_ = (act_[0].array() > 0.0).select(grad_a_, 0.0);
  Gradients out;
  out.d_points.noalias() = p.weights[0].leftCols<3>().transpose() * grad_a_;
  if (want_code && p.dims.code_dim > 0) {
    out.d_code = p.weights[0].rightCols(p.dims.code_dim).transpose() * grad_a_.rowwise().sum();
  } else {
    out.d_code = Eigen::VectorXd::Zero(p.dims.code_dim);
  }
  return out;
}

}  // namespace imptrack
