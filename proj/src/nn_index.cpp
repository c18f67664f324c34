#include "imptrack/nn_index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace imptrack {

namespace {
constexpr Eigen::Index kLeafSize = 8;
}

NNIndex::NNIndex(Eigen::Matrix3Xd points) : points_(std::move(points)) {
  const Eigen::Index n = points_.cols();
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  axis_.assign(n, -1);
  if (n > 0) build(0, n, 0);
}

void NNIndex::build(Eigen::Index lo, Eigen::Index hi, int depth) {
  if (hi - lo <= kLeafSize) return;
  Eigen::Vector3d mn = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d mx = -mn;
  for (Eigen::Index i = lo; i < hi; ++i) {
    mn = mn.cwiseMin(points_.col(order_[i]));
    mx = mx.cwiseMax(points_.col(order_[i]));
  }
  int axis = 0;
  (mx - mn).maxCoeff(&axis);
  const Eigen::Index mid = lo + (hi - lo) / 2;
  std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                   [&](Eigen::Index a, Eigen::Index b) {
                     const double va = points_(axis, a);
                     const double vb = points_(axis, b);
                     return va < vb || (va == vb && a < b);
                   });
  axis_[mid] = axis;
  build(lo, mid, depth + 1);
  build(mid + 1, hi, depth + 1);
}

std::pair<Eigen::Index, double> NNIndex::nearest(const Eigen::Vector3d& q) const {
  if (empty()) throw std::invalid_argument("NNIndex::nearest on empty index");
  Eigen::Index best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  search(0, points_.cols(), q, best, best_d2);
  return {best, best_d2};
}

void NNIndex::search(Eigen::Index lo, Eigen::Index hi, const Eigen::Vector3d& q,
                     Eigen::Index& best, double& best_d2) const {
  auto consider = [&](Eigen::Index idx) {
    const double d2 = (points_.col(idx) - q).squaredNorm();
    if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
      best_d2 = d2;
      best = idx;
    }
  };
  if (hi - lo <= kLeafSize) {
    for (Eigen::Index i = lo; i < hi; ++i) consider(order_[i]);
    return;
  }
  const Eigen::Index mid = lo + (hi - lo) / 2;
  const int axis = axis_[mid];
  const Eigen::Index node = order_[mid];
  consider(node);
  const double diff = q[axis] - points_(axis, node);
  if (diff < 0.0) {
    search(lo, mid, q, best, best_d2);
    if (diff * diff <= best_d2) search(mid + 1, hi, q, best, best_d2);
  } else {
    search(mid + 1, hi, q, best, best_d2);
    if (diff * diff <= best_d2) search(lo, mid, q, best, best_d2);
  }
}

}  // namespace imptrack
