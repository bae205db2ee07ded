#include "lkreg/point_cloud.hpp"

#include "lkreg/errors.hpp"

namespace lkreg {

PointCloud::PointCloud(Points points, std::string id)
    : points_(std::move(points)), id_(std::move(id)) {
  if (points_.cols() < 1) throw DegenerateInput("point cloud must hold at least one point");
  if (!points_.allFinite()) throw InvalidArgument("point cloud has non-finite coordinates");
}

PointCloud apply(const RigidTransform& g, const PointCloud& cloud) {
  return cloud.with_points(se3::apply(g, cloud.points()));
}

}  // namespace lkreg
