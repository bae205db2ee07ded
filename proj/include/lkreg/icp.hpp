#pragma once

#include "lkreg/point_cloud.hpp"
#include "lkreg/solver.hpp"

#include <limits>
#include <vector>

namespace lkreg {

/// Exact nearest-neighbour index over a fixed point set (3-d tree).
class KdTree {
 public:
  explicit KdTree(const Points& points);

  /// Index and squared distance of the closest stored point.
  std::pair<Eigen::Index, double> nearest(const Vec3& q) const;

 private:
  struct Node {
    Eigen::Index point;
    int axis;
    int left = -1, right = -1;
  };
  int build(std::vector<Eigen::Index>& idx, std::size_t lo, std::size_t hi, int depth);
  void search(int node, const Vec3& q, Eigen::Index& best, double& best_d2) const;

  Points points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct IcpConfig {
  int max_iters = 10;
  double max_correspondence_dist = std::numeric_limits<double>::infinity();
  double tol = 1e-10;  // Frobenius norm of the per-iteration transform change

  void validate() const;
};

/// argmin_g sum_i w_i ||g x_i - y_i||^2 over rigid g (weighted Kabsch with
/// reflection correction). Throws RankDeficient when the weighted
/// cross-covariance has rank < 2.
RigidTransform procrustes_fit(const Points& x, const Points& y, const Eigen::VectorXd& weights);
RigidTransform procrustes_fit(const Points& x, const Points& y);

/// Point-to-point ICP; residual_norms logs the summed squared correspondence
/// distance at the start of each iteration.
RegistrationResult icp_register(const PointCloud& source, const PointCloud& templ, const IcpConfig& cfg);

}  // namespace lkreg
