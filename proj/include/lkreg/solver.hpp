#pragma once

#include "lkreg/jacobian.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lkreg {

enum class Termination { kConverged, kMaxIters, kDiverged, kRankDeficient };

std::string to_string(Termination t);

struct SolverConfig {
  int max_iters = 10;  // 20 for scene-scale inputs
  double dx_tol = 1e-7;
  JacobianMethod method = JacobianMethod::kAnalytical;  // analytical or numerical
  double step = 1e-2;                                   // numerical only
  Precision precision = Precision::kSingle;             // numerical only
  WarpModel warp = WarpModel::kRigid6;
  double divergence_factor = 10.0;  // stop when ||r|| exceeds this multiple of the first residual

  void validate() const;
};

struct RegistrationResult {
  RigidTransform estimate;  // maps the source onto the template
  int iterations = 0;
  std::vector<double> residual_norms;  // one per iteration
  Termination termination = Termination::kMaxIters;
  int jacobian_builds = 0;
  std::string message;
};

std::string result_to_json(const RegistrationResult& r);

/// Inverse-compositional registration against a pooled-feature Jacobian
/// built once on the template.
///
/// The template-side warp M = G^-1(xi) starts at I; each iteration evaluates
/// r = phi(M^-1 P_S) - phi(P_T) in the template frame, solves
/// dxi = J^+ r and composes M <- M exp(-dxi). The estimate is M^-1.
RegistrationResult register_clouds(const FeatureNet& net, const PointCloud& source, const PointCloud& templ,
                                   const SolverConfig& cfg);

/// Voxelized variant: residual and Jacobian are sums over template voxels,
/// each voxel centered on its template centroid. The source is re-binned
/// into the template grid under the current estimate every iteration.
RegistrationResult register_voxelized(const FeatureNet& net, const PointCloud& source, const PointCloud& templ,
                                      const SolverConfig& cfg, const VoxelConfig& voxel_cfg);

}  // namespace lkreg
