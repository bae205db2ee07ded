#pragma once

#include "lkreg/se3.hpp"

#include <string>
#include <utility>

namespace lkreg {

/// N x 3 point set with a provenance label. Always non-empty and finite.
class PointCloud {
 public:
  explicit PointCloud(Points points, std::string id = {});

  const Points& points() const { return points_; }
  const std::string& id() const { return id_; }
  Eigen::Index size() const { return points_.cols(); }
  Vec3 point(Eigen::Index i) const { return points_.col(i); }
  Vec3 centroid() const { return points_.rowwise().mean(); }

  PointCloud with_points(Points points) const { return PointCloud(std::move(points), id_); }

 private:
  Points points_;
  std::string id_;
};

PointCloud apply(const RigidTransform& g, const PointCloud& cloud);

/// Source/template pair with ground truth mapping source onto template.
struct PairSpec {
  PointCloud source;
  PointCloud templ;
  RigidTransform gt;
};

}  // namespace lkreg
