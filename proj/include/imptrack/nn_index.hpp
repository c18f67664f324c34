#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

namespace imptrack {

/// Balanced k-d tree for exact nearest-neighbour queries. Immutable after
/// construction; concurrent queries are safe. Ties resolve to the lowest
/// input index, which makes results identical to a first-minimum linear scan.
class NNIndex {
 public:
  NNIndex() = default;
  explicit NNIndex(Eigen::Matrix3Xd points);

  bool empty() const { return points_.cols() == 0; }
  Eigen::Index size() const { return points_.cols(); }
  const Eigen::Matrix3Xd& points() const { return points_; }

  /// (index into points(), squared distance). Requires !empty().
  std::pair<Eigen::Index, double> nearest(const Eigen::Vector3d& q) const;

 private:
  void build(Eigen::Index lo, Eigen::Index hi, int depth);
  void search(Eigen::Index lo, Eigen::Index hi, const Eigen::Vector3d& q,
              Eigen::Index& best, double& best_d2) const;

  Eigen::Matrix3Xd points_;
  std::vector<Eigen::Index> order_;  // tree layout -> original index
  std::vector<int> axis_;            // split axis for the node at each median slot
};

}  // namespace imptrack
