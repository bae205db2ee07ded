#include "lkreg/icp.hpp"

#include "lkreg/errors.hpp"

#include <algorithm>
#include <numeric>

namespace lkreg {

KdTree::KdTree(const Points& points) : points_(points) {
  if (points_.cols() < 1) throw DegenerateInput("kd-tree needs at least one point");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(points_.cols()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  nodes_.reserve(idx.size());
  root_ = build(idx, 0, idx.size(), 0);
}

int KdTree::build(std::vector<Eigen::Index>& idx, std::size_t lo, std::size_t hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(mid),
                   idx.begin() + static_cast<std::ptrdiff_t>(hi),
                   [&](Eigen::Index a, Eigen::Index b) { return points_(axis, a) < points_(axis, b); });
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[static_cast<std::size_t>(node)].left = left;
  nodes_[static_cast<std::size_t>(node)].right = right;
  return node;
}

void KdTree::search(int node, const Vec3& q, Eigen::Index& best, double& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  const double d2 = (points_.col(n.point) - q).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
    best_d2 = d2;
    best = n.point;
  }
  const double diff = q[n.axis] - points_(n.axis, n.point);
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, q, best, best_d2);
  if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

std::pair<Eigen::Index, double> KdTree::nearest(const Vec3& q) const {
  Eigen::Index best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, q, best, best_d2);
  return {best, best_d2};
}

void IcpConfig::validate() const {
  if (max_iters < 1) throw ConfigError("icp max_iters must be >= 1");
  if (!(max_correspondence_dist > 0.0)) throw ConfigError("icp correspondence distance cap must be > 0");
  if (!(tol > 0.0)) throw ConfigError("icp tol must be > 0");
}

RigidTransform procrustes_fit(const Points& x, const Points& y, const Eigen::VectorXd& weights) {
  if (x.cols() != y.cols() || x.cols() != weights.size()) throw InvalidArgument("procrustes inputs must be matched");
  if (x.cols() < 3) throw InvalidArgument("procrustes needs at least 3 correspondences");
  const double wsum = weights.sum();
  if (!(wsum > 0.0)) throw InvalidArgument("procrustes weights must have positive sum");
  const Vec3 cx = x * weights / wsum;
  const Vec3 cy = y * weights / wsum;
  const Points xc = x.colwise() - cx;
  const Points yc = y.colwise() - cy;
  const Mat3 cov = yc * weights.asDiagonal() * xc.transpose();
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s[1] > 1e-12 * std::max(s[0], 1e-300)))
    throw RankDeficient("cross-covariance has rank < 2", s[0] > 0.0 ? 1 : 0, 0.0);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  // Re-orthonormalize against round-off before constructing the transform.
  Eigen::JacobiSVD<Mat3> polish(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  r = polish.matrixU() * polish.matrixV().transpose();
  return RigidTransform(r, cy - r * cx);
}

RigidTransform procrustes_fit(const Points& x, const Points& y) {
  return procrustes_fit(x, y, Eigen::VectorXd::Ones(x.cols()));
}

RegistrationResult icp_register(const PointCloud& source, const PointCloud& templ, const IcpConfig& cfg) {
  cfg.validate();
  const KdTree tree(templ.points());
  RegistrationResult res;
  RigidTransform g;
  res.termination = Termination::kMaxIters;
  const double cap2 = cfg.max_correspondence_dist * cfg.max_correspondence_dist;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Points moved = se3::apply(g, source.points());
    Points x(3, moved.cols()), y(3, moved.cols());
    Eigen::Index n = 0;
    double objective = 0.0;
    for (Eigen::Index i = 0; i < moved.cols(); ++i) {
      const auto [j, d2] = tree.nearest(moved.col(i));
      if (d2 > cap2) continue;
      x.col(n) = source.points().col(i);
      y.col(n) = templ.points().col(j);
      objective += d2;
      ++n;
    }
    res.residual_norms.push_back(objective);
    res.iterations = it + 1;
    if (n < 3) {
      res.termination = Termination::kRankDeficient;
      res.message = "fewer than 3 correspondences within the distance cap";
      break;
    }
    RigidTransform next;
    try {
      next = procrustes_fit(x.leftCols(n), y.leftCols(n));
    } catch (const RankDeficient& e) {
      res.termination = Termination::kRankDeficient;
      res.message = e.what();
      break;
    }
    const double change = (next.matrix() - g.matrix()).norm();
    g = next;
    if (change < cfg.tol) {
      res.termination = Termination::kConverged;
      break;
    }
  }
  res.estimate = g;
  return res;
}

}  // namespace lkreg
