#include "imptrack/prior_train.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "imptrack/common.hpp"

namespace imptrack {

std::vector<AnalyticShape> sample_shape_family(uint64_t seed, int n_shapes,
                                               const FamilyBounds& b) {
  if (n_shapes < 1) throw std::invalid_argument("sample_shape_family: n_shapes must be >= 1");
  Rng rng(seed);
  std::vector<AnalyticShape> shapes;
  shapes.reserve(n_shapes);
  for (int i = 0; i < n_shapes; ++i) {
    AnalyticShape s;
    s.half_length = 1.0;
    s.half_width = rng.uniform(b.width_ratio[0], b.width_ratio[1]);
    s.half_height = rng.uniform(b.height_ratio[0], b.height_ratio[1]);
    s.cabin_length_frac = rng.uniform(b.cabin_length_frac[0], b.cabin_length_frac[1]);
    s.cabin_height_frac = rng.uniform(b.cabin_height_frac[0], b.cabin_height_frac[1]);
    s.cabin_offset = rng.uniform(b.cabin_offset[0], b.cabin_offset[1]);
    s.rounding = 0.0;
    s.blend = 0.0;
    s = s.scaled(kNormalizedHalfDiagonal / s.half_extents().norm());
    s.rounding = rng.uniform(b.rounding[0], b.rounding[1]);
    s.blend = b.blend;
    s.validate();
    shapes.push_back(s);
  }
  return shapes;
}

bool within_bounds(const AnalyticShape& s, const FamilyBounds& b) {
  auto in = [](double v, const double (&r)[2]) { return v >= r[0] && v <= r[1]; };
  return in(s.half_width / s.half_length, b.width_ratio) &&
         in(s.half_height / s.half_length, b.height_ratio) &&
         in(s.cabin_length_frac, b.cabin_length_frac) &&
         in(s.cabin_height_frac, b.cabin_height_frac) &&
         in(s.cabin_offset, b.cabin_offset) && in(s.rounding, b.rounding) &&
         std::abs(s.half_extents().norm() - kNormalizedHalfDiagonal) < 1e-9;
}

std::vector<Eigen::Vector3d> sample_surface(const AnalyticShape& shape, int n, uint64_t seed) {
  Rng rng(seed);
  const Eigen::Vector3d box = shape.half_extents() + Eigen::Vector3d::Constant(0.1);
  std::vector<Eigen::Vector3d> out;
  out.reserve(n);
  while (static_cast<int>(out.size()) < n) {
    Eigen::Vector3d x(rng.uniform(-box.x(), box.x()), rng.uniform(-box.y(), box.y()),
                      rng.uniform(-box.z(), box.z()));
    x = project_to_surface(shape, x);
    if (std::abs(analytic_sdf(shape, x)) <= 1e-10) out.push_back(x);
  }
  return out;
}

std::vector<TrainSample> sample_sdf_pairs(const AnalyticShape& shape, int n, uint64_t seed,
                                          int shape_id, const SdfSampling& cfg,
                                          std::vector<SampleKind>* kinds) {
  if (n < 1) throw std::invalid_argument("sample_sdf_pairs: n must be >= 1");
  Rng rng(seed);
  std::vector<TrainSample> out;
  out.reserve(n);
  if (kinds) kinds->clear();
  const auto surface = sample_surface(shape, n, mix_seed(seed, 1));
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    SampleKind kind;
    Eigen::Vector3d x;
    if (u < 0.1) {
      kind = SampleKind::Surface;
      x = surface[i];
    } else if (u < 0.5) {
      kind = SampleKind::NearFine;
      x = surface[i] + cfg.sigma_fine * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    } else if (u < 0.9) {
      kind = SampleKind::NearCoarse;
      x = surface[i] +
          cfg.sigma_coarse * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    } else {
      kind = SampleKind::Uniform;
      do {
        x = Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      } while (x.squaredNorm() > 1.0);
      x *= cfg.uniform_radius;
    }
    out.push_back({shape_id, x, analytic_sdf(shape, x)});
    if (kinds) kinds->push_back(kind);
  }
  return out;
}

PointCloud simulate_partial_scan(const AnalyticShape& shape, const Eigen::Vector3d& sensor,
                                 int azimuth_rays, int elevation_rays) {
  if (analytic_sdf(shape, sensor) <= 0.0)
    throw std::invalid_argument("simulate_partial_scan: sensor inside the shape");
  const double dist = sensor.norm();
  const double radius = shape.half_extents().norm() + 0.02;
  const Eigen::Vector3d to_center = -sensor / dist;
  const double az0 = std::atan2(to_center.y(), to_center.x());
  const double el0 = std::asin(std::clamp(to_center.z(), -1.0, 1.0));
  const double half_angle = std::asin(std::min(1.0, radius / dist));
  const double t_far = dist + radius;
  std::vector<Eigen::Vector3d> hits;
  for (int j = 0; j < elevation_rays; ++j) {
    const double el = el0 + half_angle * (2.0 * (j + 0.5) / elevation_rays - 1.0);
    for (int i = 0; i < azimuth_rays; ++i) {
      const double az = az0 + half_angle * (2.0 * (i + 0.5) / azimuth_rays - 1.0);
      const Eigen::Vector3d dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                std::sin(el));
      double t = std::max(0.0, dist - radius);
      for (int step = 0; step < 2000 && t <= t_far; ++step) {
        const Eigen::Vector3d p = sensor + t * dir;
        const double d = analytic_sdf(shape, p);
        if (d < 1e-7) {
          hits.push_back(p);
          break;
        }
        t += d;
      }
    }
  }
  Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(hits.size()));
  for (size_t k = 0; k < hits.size(); ++k) pts.col(static_cast<Eigen::Index>(k)) = hits[k];
  return PointCloud(std::move(pts), Frame::Normalized);
}

std::vector<Eigen::Vector3d> sample_scan_viewpoints(uint64_t seed, int count, double min_range,
                                                    double max_range,
                                                    double metric_to_normalized) {
  Rng rng(seed);
  std::vector<Eigen::Vector3d> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double az = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double el = rng.uniform(0.0, 20.0) * std::numbers::pi / 180.0;
    const double r = rng.uniform(min_range, max_range) * metric_to_normalized;
    out.emplace_back(r * std::cos(el) * std::cos(az), r * std::cos(el) * std::sin(az),
                     r * std::sin(el));
  }
  return out;
}

std::vector<TrainSample> build_training_set(const std::vector<AnalyticShape>& shapes,
                                            const TrainConfig& config) {
  std::vector<TrainSample> all;
  const double m2n = 2.0 / (config.nominal_diagonal * 1.03);
  for (size_t id = 0; id < shapes.size(); ++id) {
    const auto& shape = shapes[id];
    auto pairs = sample_sdf_pairs(shape, config.samples_per_shape,
                                  mix_seed(config.seed, 1000 + id), static_cast<int>(id),
                                  config.sampling);
    all.insert(all.end(), pairs.begin(), pairs.end());
    if (config.scan_views <= 0 || config.scan_points_per_shape <= 0) continue;

    std::vector<Eigen::Vector3d> hits;
    for (const auto& vp : sample_scan_viewpoints(mix_seed(config.seed, 2000 + id),
                                                 config.scan_views, config.scan_min_range,
                                                 config.scan_max_range, m2n)) {
      const auto scan = simulate_partial_scan(shape, vp);
      for (Eigen::Index k = 0; k < scan.size(); ++k) hits.emplace_back(scan.points.col(k));
    }
    // partial Fisher-Yates to keep a fixed-size subset of scan hits
    Rng pick(mix_seed(config.seed, 3000 + id));
    const size_t keep = std::min(hits.size(), static_cast<size_t>(config.scan_points_per_shape));
    for (size_t k = 0; k < keep; ++k) {
      const size_t j = k + pick.below(hits.size() - k);
      std::swap(hits[k], hits[j]);
      all.push_back({static_cast<int>(id), hits[k], analytic_sdf(shape, hits[k])});
    }
  }
  return all;
}

namespace {

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  template <typename Derived, typename G>
  void update(Eigen::MatrixBase<Derived>& param, const G& grad, Eigen::MatrixXd& m,
              Eigen::MatrixXd& v) const {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    param -= (lr * (m / c1).array() / ((v / c2).array().sqrt() + eps)).matrix();
  }
};

}  // namespace

TrainResult train_auto_decoder(const std::vector<AnalyticShape>& shapes,
                               const TrainConfig& config) {
  if (shapes.empty()) throw std::invalid_argument("train_auto_decoder: no shapes");
  return train_auto_decoder(build_training_set(shapes, config), static_cast<int>(shapes.size()),
                            config);
}

TrainResult train_auto_decoder(const std::vector<TrainSample>& samples, int n_shapes,
                               const TrainConfig& config) {
  if (n_shapes < 1 || samples.empty())
    throw std::invalid_argument("train_auto_decoder: empty training set");
  if (config.batch_size < 1 || config.epochs < 0)
    throw ConfigError("train_auto_decoder: invalid batch size or epoch count");
  const int d = config.dims.code_dim;

  TrainResult result;
  result.params = init_params(config.seed, config.dims);
  Rng code_rng(mix_seed(config.seed, 77));
  Eigen::MatrixXd codes(d, n_shapes);
  for (int s = 0; s < n_shapes; ++s)
    for (int k = 0; k < d; ++k) codes(k, s) = code_rng.normal(0.0, config.code_init_sigma);

  auto& params = result.params;
  std::array<Eigen::MatrixXd, kDecoderLayers> mw, vw, mb, vb;
  for (int l = 0; l < kDecoderLayers; ++l) {
    mw[l] = vw[l] = Eigen::MatrixXd::Zero(params.weights[l].rows(), params.weights[l].cols());
    mb[l] = vb[l] = Eigen::MatrixXd::Zero(params.biases[l].size(), 1);
  }
  Eigen::MatrixXd mc = Eigen::MatrixXd::Zero(d, n_shapes), vc = mc;
  Adam adam{config.learning_rate};

  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const double delta = config.delta;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle(mix_seed(config.seed, 100000 + epoch));
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t stop = std::min(order.size(), start + config.batch_size);
      const auto bsz = static_cast<Eigen::Index>(stop - start);
      Eigen::MatrixXd inputs(3 + d, bsz);
      Eigen::VectorXd targets(bsz);
      std::vector<int> ids(bsz);
      for (Eigen::Index i = 0; i < bsz; ++i) {
        const auto& s = samples[order[start + i]];
        inputs.col(i).head<3>() = s.point;
        inputs.col(i).tail(d) = codes.col(s.shape_id);
        targets(i) = s.target;
        ids[i] = s.shape_id;
      }
      double data_loss = 0.0;
      auto bb = batch_forward_backward(params, inputs, [&](const Eigen::VectorXd& values) {
        Eigen::VectorXd up(values.size());
        for (Eigen::Index i = 0; i < values.size(); ++i) {
          const auto l = smooth_l1(values(i) - targets(i), delta);
          data_loss += l.value;
          up(i) = l.derivative / static_cast<double>(bsz);
        }
        return up;
      });
      double reg_loss = 0.0;
      Eigen::MatrixXd code_grad = Eigen::MatrixXd::Zero(d, n_shapes);
      for (Eigen::Index i = 0; i < bsz; ++i) {
        const auto& z = codes.col(ids[i]);
        reg_loss += z.squaredNorm();
        code_grad.col(ids[i]) += bb.d_inputs.col(i).tail(d) +
                                 (2.0 * config.code_reg / static_cast<double>(bsz)) * z;
      }
      const double batch_loss =
          (data_loss + config.code_reg * reg_loss) / static_cast<double>(bsz);
      if (!std::isfinite(batch_loss)) {
        throw NumericError("train_auto_decoder: loss diverged (non-finite) at epoch " +
                           std::to_string(epoch) + ", step " + std::to_string(adam.step));
      }
      epoch_loss += batch_loss * static_cast<double>(bsz);

      ++adam.step;
      for (int l = 0; l < kDecoderLayers; ++l) {
        adam.update(params.weights[l], bb.d_params.weights[l], mw[l], vw[l]);
        Eigen::MatrixXd bias = params.biases[l];
        adam.update(bias, Eigen::MatrixXd(bb.d_params.biases[l]), mb[l], vb[l]);
        params.biases[l] = bias;
      }
      adam.update(codes, code_grad, mc, vc);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(samples.size()));
  }

  result.codes.codes.reserve(n_shapes);
  for (int s = 0; s < n_shapes; ++s) result.codes.codes.emplace_back(codes.col(s));
  return result;
}

ShapeCode mean_code(const CodeTable& table) {
  if (table.empty()) throw std::invalid_argument("mean_code: empty code table");
  ShapeCode sum = ShapeCode::Zero(table.codes.front().size());
  for (const auto& c : table.codes) {
    if (c.size() != sum.size()) throw ConfigError("mean_code: mixed code dimensions");
    sum += c;
  }
  return sum / static_cast<double>(table.codes.size());
}

}  // namespace imptrack
