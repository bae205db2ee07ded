#include "lkreg/jacobian.hpp"

#include "lkreg/errors.hpp"

#include <algorithm>
#include <set>

namespace lkreg {

std::string to_string(JacobianMethod m) {
  switch (m) {
    case JacobianMethod::kAnalytical: return "analytical";
    case JacobianMethod::kNumerical: return "numerical";
    case JacobianMethod::kVoxelized: return "voxelized";
  }
  return "unknown";
}

int warp_dof(WarpModel w) { return w == WarpModel::kRigid6 ? 6 : 3; }

Twist expand_twist(WarpModel w, const Eigen::VectorXd& params) {
  if (params.size() != warp_dof(w)) throw InvalidArgument("warp parameter count mismatch");
  if (w == WarpModel::kRigid6) return Twist(Vec6(params));
  Vec6 xi = Vec6::Zero();
  xi[2] = params[0];
  xi[3] = params[1];
  xi[4] = params[2];
  return Twist(xi);
}

Eigen::Matrix<double, 3, 6> warp_jacobian(const Vec3& p) {
  if (!p.allFinite()) throw InvalidArgument("warp point has non-finite entries");
  Eigen::Matrix<double, 3, 6> w;
  w << se3::skew(p), -Mat3::Identity();
  return w;
}

Eigen::Matrix3d planar_warp_jacobian(const Vec3& p) {
  const Eigen::Matrix<double, 3, 6> full = warp_jacobian(p);
  return full.middleCols<3>(2);
}

Eigen::MatrixXd warp_jacobian(WarpModel w, const Vec3& p) {
  if (w == WarpModel::kRigid6) return warp_jacobian(p);
  return planar_warp_jacobian(p);
}

Eigen::MatrixXd pooled_jacobian(const FeatureNet& net, const Points& feature_points, WarpModel warp,
                                const Points* warp_points, Eigen::Index* coverage) {
  if (warp_points && warp_points->cols() != feature_points.cols())
    throw InvalidArgument("warp points must align with feature points");
  const Activations acts = forward(net, feature_points);
  const Eigen::MatrixXd grad = routed_input_gradient(net, acts);  // K x 3
  const Points& at = warp_points ? *warp_points : feature_points;
  const auto k = grad.rows();
  Eigen::MatrixXd j(k, warp_dof(warp));
  for (Eigen::Index r = 0; r < k; ++r) {
    const Eigen::Index i = acts.argmax[static_cast<std::size_t>(r)];
    j.row(r) = grad.row(r) * warp_jacobian(warp, at.col(i));
  }
  if (coverage) {
    *coverage = static_cast<Eigen::Index>(std::set<Eigen::Index>(acts.argmax.begin(), acts.argmax.end()).size());
  }
  return j;
}

Eigen::MatrixXd numerical_jacobian_matrix(const FeatureNet& net, const Points& points, double step,
                                          Precision precision) {
  if (!(step > 0.0)) throw InvalidArgument("finite-difference step must be > 0");
  auto phi = [&](const Points& p) {
    return precision == Precision::kSingle ? global_feature_single(net, p) : global_feature(net, p);
  };
  const Eigen::VectorXd base = phi(points);
  Eigen::MatrixXd j(base.size(), 6);
  for (int p = 0; p < 6; ++p) {
    Vec6 xi = Vec6::Zero();
    xi[p] = -step;
    const Eigen::VectorXd moved = phi(se3::apply(se3::exp(Twist(xi)), points));
    if (precision == Precision::kSingle) {
      const Eigen::VectorXf diff = (moved.cast<float>() - base.cast<float>());
      j.col(p) = (diff / static_cast<float>(step)).cast<double>();
    } else {
      j.col(p) = (moved - base) / step;
    }
  }
  return j;
}

namespace {
thread_local long build_counter = 0;
}

long jacobian_builds_on_this_thread() { return build_counter; }

JacobianBundle make_bundle(Eigen::MatrixXd jacobian, JacobianMethod method, WarpModel warp,
                           Eigen::Index coverage, double step) {
  ++build_counter;
  if (!jacobian.allFinite()) throw RankDeficient("Jacobian has non-finite entries", 0, 0.0);
  JacobianBundle b;
  b.method = method;
  b.warp = warp;
  b.step = step;
  b.diagnostics.argmax_coverage = coverage;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jacobian);
  const Eigen::VectorXd s = svd.singularValues();
  const double smax = s.size() ? s[0] : 0.0;
  const double smin = s.size() ? s[s.size() - 1] : 0.0;
  b.diagnostics.condition = smin > 0.0 ? (smax / smin) * (smax / smin) : std::numeric_limits<double>::infinity();

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jacobian);
  cod.setThreshold(1e-10);
  b.diagnostics.rank = cod.rank();
  if (smax == 0.0) b.diagnostics.rank = 0;
  if (b.diagnostics.rank < jacobian.cols())
    throw RankDeficient("Jacobian rank " + std::to_string(b.diagnostics.rank) + " < " +
                            std::to_string(jacobian.cols()) + " (cond(J^T J) = " +
                            std::to_string(b.diagnostics.condition) + ", coverage " +
                            std::to_string(coverage) + ")",
                        b.diagnostics.rank, b.diagnostics.condition);
  b.pinv = cod.pseudoInverse();
  b.jacobian = std::move(jacobian);
  return b;
}

JacobianBundle analytical_jacobian(const FeatureNet& net, const PointCloud& templ, WarpModel warp) {
  Eigen::Index coverage = 0;
  Eigen::MatrixXd j = pooled_jacobian(net, templ.points(), warp, nullptr, &coverage);
  return make_bundle(std::move(j), JacobianMethod::kAnalytical, warp, coverage);
}

JacobianBundle numerical_jacobian(const FeatureNet& net, const PointCloud& templ, double step,
                                  Precision precision, WarpModel warp) {
  Eigen::MatrixXd j = numerical_jacobian_matrix(net, templ.points(), step, precision);
  if (warp == WarpModel::kPlanar3) j = Eigen::MatrixXd(j.middleCols(2, 3));
  return make_bundle(std::move(j), JacobianMethod::kNumerical, warp, 0, step);
}

Eigen::MatrixXd voxel_jacobian_matrix(const FeatureNet& net, const PointCloud& templ,
                                      const VoxelPartition& partition, Eigen::Index* coverage) {
  if (partition.voxels.empty()) throw DegenerateInput("voxel partition is empty");
  Eigen::MatrixXd jg = Eigen::MatrixXd::Zero(net.feature_dim(), 6);
  Eigen::Index covered = 0;
  for (const Voxel& v : partition.voxels) {
    const Points local = gather_centered(templ.points(), v.indices, v.center);
    Eigen::Index c = 0;
    jg += pooled_jacobian(net, local, WarpModel::kRigid6, nullptr, &c) * se3::adjoint_translation(v.center);
    covered += c;
  }
  if (coverage) *coverage = covered;
  return jg;
}

JacobianBundle voxel_global_jacobian(const FeatureNet& net, const PointCloud& templ,
                                     const VoxelPartition& partition) {
  Eigen::Index coverage = 0;
  Eigen::MatrixXd j = voxel_jacobian_matrix(net, templ, partition, &coverage);
  try {
    return make_bundle(std::move(j), JacobianMethod::kVoxelized, WarpModel::kRigid6, coverage);
  } catch (const RankDeficient& e) {
    throw RankDeficient(std::string(e.what()) + " over " + std::to_string(partition.voxels.size()) + " voxels",
                        e.rank(), e.condition());
  }
}

}  // namespace lkreg
