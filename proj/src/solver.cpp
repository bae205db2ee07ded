#include "lkreg/solver.hpp"

#include "lkreg/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <unordered_map>

namespace lkreg {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kConverged: return "converged";
    case Termination::kMaxIters: return "max_iters";
    case Termination::kDiverged: return "diverged";
    case Termination::kRankDeficient: return "rank_deficient";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(dx_tol > 0.0)) throw ConfigError("dx_tol must be > 0");
  if (!(divergence_factor > 0.0)) throw ConfigError("divergence_factor must be > 0");
  if (method == JacobianMethod::kNumerical && !(step > 0.0)) throw ConfigError("step must be > 0");
  if (method == JacobianMethod::kVoxelized)
    throw ConfigError("use register_voxelized for the voxelized Jacobian");
}

std::string result_to_json(const RegistrationResult& r) {
  nlohmann::json j;
  std::vector<double> m;
  for (int row = 0; row < 4; ++row)
    for (int col = 0; col < 4; ++col) m.push_back(r.estimate.matrix()(row, col));
  j["estimate"] = m;
  j["iterations"] = r.iterations;
  j["residual_norms"] = r.residual_norms;
  j["termination"] = to_string(r.termination);
  j["jacobian_builds"] = r.jacobian_builds;
  if (!r.message.empty()) j["message"] = r.message;
  return j.dump(2);
}

namespace {

template <typename Residual>
RegistrationResult iterate(const JacobianBundle& bundle, const SolverConfig& cfg, long builds_before,
                           Residual&& residual) {
  RegistrationResult res;
  RigidTransform warp;  // G^-1(xi): applied to the template
  double first = 0.0;
  res.termination = Termination::kMaxIters;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Eigen::VectorXd r = residual(se3::inverse(warp));
    const double norm = r.norm();
    res.residual_norms.push_back(norm);
    res.iterations = it + 1;
    if (!std::isfinite(norm)) {
      res.termination = Termination::kDiverged;
      res.message = "non-finite feature residual";
      break;
    }
    if (it == 0) {
      first = norm;
    } else if (norm > cfg.divergence_factor * first) {
      res.termination = Termination::kDiverged;
      res.message = "feature residual grew beyond the divergence guard";
      break;
    }
    const Eigen::VectorXd dp = bundle.pinv * r;
    if (!dp.allFinite()) {
      res.termination = Termination::kDiverged;
      res.message = "non-finite increment";
      break;
    }
    // G^-1(xi o^-1 dxi) = G^-1(xi) G^-1(dxi)
    warp = se3::compose(warp, se3::exp(-expand_twist(bundle.warp, dp)));
    if (dp.norm() < cfg.dx_tol) {
      res.termination = Termination::kConverged;
      break;
    }
  }
  res.estimate = se3::inverse(warp);
  res.jacobian_builds = static_cast<int>(jacobian_builds_on_this_thread() - builds_before);
  return res;
}

RegistrationResult rank_deficient(const RankDeficient& e, long builds_before) {
  RegistrationResult res;
  res.termination = Termination::kRankDeficient;
  res.jacobian_builds = static_cast<int>(jacobian_builds_on_this_thread() - builds_before);
  res.message = e.what();
  return res;
}

}  // namespace

RegistrationResult register_clouds(const FeatureNet& net, const PointCloud& source, const PointCloud& templ,
                                   const SolverConfig& cfg) {
  cfg.validate();
  if (net.mode() != NetMode::kInference) throw ModeError("registration needs an inference-mode network");
  const long builds_before = jacobian_builds_on_this_thread();
  JacobianBundle bundle;
  try {
    bundle = cfg.method == JacobianMethod::kNumerical
                 ? numerical_jacobian(net, templ, cfg.step, cfg.precision, cfg.warp)
                 : analytical_jacobian(net, templ, cfg.warp);
  } catch (const RankDeficient& e) {
    return rank_deficient(e, builds_before);
  }
  const Eigen::VectorXd target = global_feature(net, templ);
  return iterate(bundle, cfg, builds_before, [&](const RigidTransform& estimate) -> Eigen::VectorXd {
    return global_feature(net, se3::apply(estimate, source.points())) - target;
  });
}

RegistrationResult register_voxelized(const FeatureNet& net, const PointCloud& source, const PointCloud& templ,
                                      const SolverConfig& cfg, const VoxelConfig& voxel_cfg) {
  cfg.validate();
  if (net.mode() != NetMode::kInference) throw ModeError("registration needs an inference-mode network");
  if (cfg.warp != WarpModel::kRigid6) throw ConfigError("voxelized registration supports the 6-DoF warp only");
  const VoxelPartition part = voxelize(templ, voxel_cfg);
  const long builds_before = jacobian_builds_on_this_thread();
  JacobianBundle bundle;
  try {
    bundle = voxel_global_jacobian(net, templ, part);
  } catch (const RankDeficient& e) {
    return rank_deficient(e, builds_before);
  }

  std::vector<Eigen::VectorXd> target;
  target.reserve(part.voxels.size());
  for (const Voxel& v : part.voxels)
    target.push_back(global_feature(net, gather_centered(templ.points(), v.indices, v.center)));

  return iterate(bundle, cfg, builds_before, [&](const RigidTransform& estimate) -> Eigen::VectorXd {
    const PointCloud moved = apply(estimate, source);
    const VoxelPartition binned = bin_into_grid(moved, part.grid, voxel_cfg);
    std::unordered_map<int, const Voxel*> by_cell;
    for (const Voxel& v : binned.voxels) by_cell.emplace(v.cell, &v);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(net.feature_dim());
    for (std::size_t m = 0; m < part.voxels.size(); ++m) {
      const Voxel& tv = part.voxels[m];
      auto it = by_cell.find(tv.cell);
      // Voxels without enough source points contribute no residual.
      if (it == by_cell.end()) continue;
      r += global_feature(net, gather_centered(moved.points(), it->second->indices, tv.center)) - target[m];
    }
    return r;
  });
}

}  // namespace lkreg
