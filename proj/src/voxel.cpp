#include "lkreg/cloud.hpp"

#include "lkreg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace lkreg {

int VoxelGrid::cell_of(const Vec3& p) const {
  std::array<int, 3> ijk{};
  for (int a = 0; a < 3; ++a) {
    const double extent = upper[a] - lower[a];
    int i = 0;
    if (extent > 0.0) i = static_cast<int>(std::floor((p[a] - lower[a]) / extent * dims[a]));
    ijk[a] = std::clamp(i, 0, dims[a] - 1);
  }
  return ijk[0] + dims[0] * (ijk[1] + dims[1] * ijk[2]);
}

Points gather_centered(const Points& cloud, const std::vector<Eigen::Index>& indices, const Vec3& center) {
  Points out(3, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = cloud.col(indices[i]) - center;
  return out;
}

VoxelPartition bin_into_grid(const PointCloud& cloud, const VoxelGrid& grid, const VoxelConfig& cfg) {
  if (std::any_of(grid.dims.begin(), grid.dims.end(), [](int d) { return d < 1; }))
    throw InvalidArgument("voxel grid dims must be >= 1");
  if (cfg.min_points < 4) throw InvalidArgument("voxel min_points must be >= 4");
  if (cfg.max_points_per_voxel < cfg.min_points)
    throw InvalidArgument("max_points_per_voxel must be >= min_points");

  std::vector<std::vector<Eigen::Index>> buckets(static_cast<std::size_t>(grid.cell_count()));
  const Points& p = cloud.points();
  for (Eigen::Index i = 0; i < p.cols(); ++i)
    buckets[static_cast<std::size_t>(grid.cell_of(p.col(i)))].push_back(i);

  VoxelPartition out;
  out.grid = grid;
  for (int cell = 0; cell < grid.cell_count(); ++cell) {
    auto& bucket = buckets[static_cast<std::size_t>(cell)];
    if (static_cast<int>(bucket.size()) < cfg.min_points) continue;
    Voxel v;
    v.cell = cell;
    if (static_cast<int>(bucket.size()) > cfg.max_points_per_voxel) {
      Rng rng(cfg.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(cell + 1));
      for (Eigen::Index k : sample_without_replacement(static_cast<Eigen::Index>(bucket.size()),
                                                       cfg.max_points_per_voxel, rng))
        v.indices.push_back(bucket[static_cast<std::size_t>(k)]);
    } else {
      v.indices = std::move(bucket);
    }
    Vec3 sum = Vec3::Zero();
    for (Eigen::Index i : v.indices) sum += p.col(i);
    v.center = sum / static_cast<double>(v.indices.size());
    out.voxels.push_back(std::move(v));
  }
  return out;
}

VoxelPartition voxelize(const PointCloud& cloud, const VoxelConfig& cfg) {
  VoxelGrid grid;
  grid.dims = cfg.dims;
  grid.lower = cloud.points().rowwise().minCoeff();
  grid.upper = cloud.points().rowwise().maxCoeff();
  VoxelPartition part = bin_into_grid(cloud, grid, cfg);
  if (part.voxels.empty()) throw DegenerateInput("every voxel fell below min_points");
  return part;
}

}  // namespace lkreg
