#include "lkreg/metrics.hpp"

#include "lkreg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lkreg {

PairError pair_error(const RigidTransform& est, const RigidTransform& gt) {
  const RigidTransform diff = se3::compose(est, se3::inverse(gt));
  PairError e;
  try {
    e.rot_deg = se3::log(diff).omega().norm() * 180.0 / std::numbers::pi;
  } catch (const SingularityError&) {
    e.rot_deg = 180.0;
  }
  e.trans = diff.translation().norm();
  return e;
}

double success_ratio(const std::vector<PairError>& errors, const SuccessCriterion& criterion) {
  if (errors.empty()) throw InvalidArgument("success ratio of an empty list");
  const auto ok = std::count_if(errors.begin(), errors.end(), [&](const PairError& e) { return criterion.accepts(e); });
  return static_cast<double>(ok) / static_cast<double>(errors.size());
}

namespace {

double lower_median(std::vector<double> v) {
  const std::size_t mid = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  return v[mid];
}

}  // namespace

Aggregate aggregate(const std::vector<PairError>& errors, const SuccessCriterion& criterion) {
  if (errors.empty()) throw InvalidArgument("cannot aggregate an empty error list");
  Aggregate a;
  a.count = errors.size();
  std::vector<double> rot, trans;
  rot.reserve(errors.size());
  trans.reserve(errors.size());
  double sr = 0.0, st = 0.0;
  for (const PairError& e : errors) {
    rot.push_back(e.rot_deg);
    trans.push_back(e.trans);
    sr += e.rot_deg * e.rot_deg;
    st += e.trans * e.trans;
  }
  const auto n = static_cast<double>(errors.size());
  a.rmse_rot = std::sqrt(sr / n);
  a.rmse_trans = std::sqrt(st / n);
  a.median_rot = lower_median(std::move(rot));
  a.median_trans = lower_median(std::move(trans));
  a.success_ratio = success_ratio(errors, criterion);
  return a;
}

double auc(const std::vector<std::pair<double, double>>& curve) {
  if (curve.size() < 2) throw InvalidArgument("AUC needs at least two curve points");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto [x0, y0] = curve[i - 1];
    const auto [x1, y1] = curve[i];
    if (!(x1 > x0)) throw InvalidArgument("AUC thresholds must be strictly increasing");
    if (y0 < 0.0 || y0 > 1.0 || y1 < 0.0 || y1 > 1.0) throw InvalidArgument("AUC ratios must lie in [0, 1]");
    area += 0.5 * (y0 + y1) * (x1 - x0);
  }
  return area / (curve.back().first - curve.front().first);
}

std::vector<std::pair<double, double>> success_curve(const std::vector<PairError>& errors,
                                                     const SuccessCriterion& max, CurveAxis axis, int samples) {
  if (samples < 2) throw InvalidArgument("success curve needs at least two samples");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> curve;
  curve.reserve(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    const double f = static_cast<double>(s) / (samples - 1);
    SuccessCriterion c{max.rot_deg * f, max.trans * f};
    if (axis == CurveAxis::kRotation) c.trans = inf;
    if (axis == CurveAxis::kTranslation) c.rot_deg = inf;
    const double x = axis == CurveAxis::kTranslation ? max.trans * f : max.rot_deg * f;
    curve.emplace_back(x, success_ratio(errors, c));
  }
  return curve;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidArgument("pearson needs equal-length inputs of size >= 2");
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double va = da.square().sum(), vb = db.square().sum();
  if (!(va > 0.0) || !(vb > 0.0) || !std::isfinite(va) || !std::isfinite(vb)) return 0.0;
  return (da * db).sum() / std::sqrt(va * vb);
}

}  // namespace lkreg
