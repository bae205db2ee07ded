#pragma once

#include "lkreg/cloud.hpp"
#include "lkreg/featnet.hpp"

namespace lkreg {

enum class JacobianMethod { kAnalytical, kNumerical, kVoxelized };
/// Arithmetic used for the forward passes of the finite-difference Jacobian.
enum class Precision { kSingle, kDouble };
/// Warp family composed with the feature gradient.
enum class WarpModel { kRigid6, kPlanar3 };

std::string to_string(JacobianMethod m);
int warp_dof(WarpModel w);
/// Embeds warp parameters into a full twist (planar: (w_z, v_x, v_y)).
Twist expand_twist(WarpModel w, const Eigen::VectorXd& params);

/// d(exp(-xi) p)/d xi at xi = 0: [skew(p) | -I].
Eigen::Matrix<double, 3, 6> warp_jacobian(const Vec3& p);
/// Columns (w_z, v_x, v_y) of warp_jacobian.
Eigen::Matrix3d planar_warp_jacobian(const Vec3& p);
Eigen::MatrixXd warp_jacobian(WarpModel w, const Vec3& p);

struct JacobianDiagnostics {
  long rank = 0;
  double condition = 0.0;          // of J^T J
  Eigen::Index argmax_coverage = 0;  // distinct points routed into J
};

struct JacobianBundle {
  Eigen::MatrixXd jacobian;  // K x dof
  Eigen::MatrixXd pinv;      // dof x K
  JacobianMethod method = JacobianMethod::kAnalytical;
  WarpModel warp = WarpModel::kRigid6;
  double step = 0.0;  // finite-difference step, numerical only
  JacobianDiagnostics diagnostics;
};

/// Pooled steepest-descent matrix: row k is the feature gradient of point
/// argmax[k] times the warp Jacobian at that point. Warp Jacobians are taken
/// at `warp_points` when given (same column order as `feature_points`).
/// No rank requirement.
Eigen::MatrixXd pooled_jacobian(const FeatureNet& net, const Points& feature_points,
                                WarpModel warp = WarpModel::kRigid6, const Points* warp_points = nullptr,
                                Eigen::Index* coverage = nullptr);

/// One-sided differences (phi(exp(-t T_p) P) - phi(P)) / t, K x 6.
Eigen::MatrixXd numerical_jacobian_matrix(const FeatureNet& net, const Points& points, double step,
                                          Precision precision = Precision::kSingle);

/// Pseudoinverse (complete orthogonal decomposition, relative rank tolerance
/// 1e-10) and diagnostics. Throws RankDeficient when rank < columns.
///
/// Every call counts as one Jacobian build on the calling thread.
JacobianBundle make_bundle(Eigen::MatrixXd jacobian, JacobianMethod method, WarpModel warp,
                           Eigen::Index coverage = 0, double step = 0.0);

/// Number of make_bundle calls made by the current thread so far.
long jacobian_builds_on_this_thread();

JacobianBundle analytical_jacobian(const FeatureNet& net, const PointCloud& templ,
                                   WarpModel warp = WarpModel::kRigid6);
JacobianBundle numerical_jacobian(const FeatureNet& net, const PointCloud& templ, double step,
                                  Precision precision = Precision::kSingle,
                                  WarpModel warp = WarpModel::kRigid6);

/// Sum over voxels of the local Jacobian (on centroid-centered points)
/// right-multiplied by adjoint_translation(center).
Eigen::MatrixXd voxel_jacobian_matrix(const FeatureNet& net, const PointCloud& templ,
                                      const VoxelPartition& partition, Eigen::Index* coverage = nullptr);
JacobianBundle voxel_global_jacobian(const FeatureNet& net, const PointCloud& templ,
                                     const VoxelPartition& partition);

}  // namespace lkreg
