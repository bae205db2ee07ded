#pragma once

#include "lkreg/se3.hpp"

#include <utility>
#include <vector>

namespace lkreg {

/// Error of est * gt^-1: geodesic rotation angle (degrees) and translation norm.
struct PairError {
  double rot_deg = 0.0;
  double trans = 0.0;
};

struct SuccessCriterion {
  double rot_deg = 5.0;
  double trans = 0.05;

  /// Strict: both errors must be smaller than the thresholds.
  bool accepts(const PairError& e) const { return e.rot_deg < rot_deg && e.trans < trans; }
};

PairError pair_error(const RigidTransform& est, const RigidTransform& gt);

struct Aggregate {
  double rmse_rot = 0.0;
  double median_rot = 0.0;
  double rmse_trans = 0.0;
  double median_trans = 0.0;
  double success_ratio = 0.0;
  std::size_t count = 0;
};

/// Median of an even-sized list is the lower of the two middle values.
Aggregate aggregate(const std::vector<PairError>& errors, const SuccessCriterion& criterion);

double success_ratio(const std::vector<PairError>& errors, const SuccessCriterion& criterion);

/// Trapezoidal area under (threshold, ratio) normalized by the threshold range.
double auc(const std::vector<std::pair<double, double>>& curve);

enum class CurveAxis { kJoint, kRotation, kTranslation };

/// Success ratio sampled at `samples` uniformly spaced fractions in [0, 1] of
/// the criterion. kJoint scales both thresholds together; kRotation and
/// kTranslation sweep one threshold and ignore the other. Thresholds of the
/// returned curve are in rotation degrees (kJoint, kRotation) or scene units.
std::vector<std::pair<double, double>> success_curve(const std::vector<PairError>& errors,
                                                     const SuccessCriterion& max, CurveAxis axis,
                                                     int samples = 64);

/// Pearson correlation; 0 when either side has zero variance.
double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace lkreg
