#pragma once

#include "lkreg/point_cloud.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace lkreg {

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// File I/O

enum class CloudFormat { kXyz, kOff, kPlyAscii };

/// Parses "xyz", "off", "ply" (case-insensitive). Throws UnsupportedFormat.
CloudFormat parse_format(std::string_view name);
/// Format from the file extension. Throws UnsupportedFormat.
CloudFormat format_from_path(const std::filesystem::path& path);

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format);
PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

/// Parsers over in-memory text; `load_cloud` forwards to these.
PointCloud parse_xyz(std::string_view text, std::string id = {});
PointCloud parse_off(std::string_view text, std::string id = {});
PointCloud parse_ply_ascii(std::string_view text, std::string id = {});

// ---------------------------------------------------------------------------
// Synthetic shapes

enum class PrimitiveKind { kSphere, kCube, kCylinder, kTorus, kPlaneWithBumps };

inline constexpr std::array<PrimitiveKind, 5> kAllPrimitives = {
    PrimitiveKind::kSphere, PrimitiveKind::kCube, PrimitiveKind::kCylinder,
    PrimitiveKind::kTorus, PrimitiveKind::kPlaneWithBumps};

std::string to_string(PrimitiveKind kind);
PrimitiveKind parse_primitive(std::string_view name);

/// Area-uniform surface samples. Canonical sizes: unit sphere, cube [-1,1]^3,
/// capped cylinder of radius 1 and height 2, torus (R = 1, r = 0.35),
/// bumpy height field over [-1,1]^2. Deterministic per seed.
PointCloud generate_primitive(PrimitiveKind kind, int n_points, std::uint64_t seed);

/// Primitive with independent per-axis scale factors drawn from
/// [min_scale, 1] and a random orientation, so that continuous symmetries of
/// the canonical shape are broken. Not normalized.
PointCloud generate_varied_primitive(PrimitiveKind kind, int n_points, std::uint64_t seed,
                                     double min_scale = 0.4);

/// Several varied primitives, each normalized to a unit box and placed at
/// distinct offsets inside [-spread, spread]^3. Point budget split evenly.
PointCloud generate_scene(int n_objects, int n_points, std::uint64_t seed, double spread = 1.0);

// ---------------------------------------------------------------------------
// Protocol transforms

/// Centroid to origin, then isotropic scaling so the largest absolute
/// coordinate equals 0.5. Throws DegenerateInput on zero extent.
PointCloud normalize_unit_box(const PointCloud& cloud);

/// Axis and translation direction uniform on the sphere; angle uniform in
/// [0, max_rot_deg], translation magnitude uniform in [0, max_trans]. The
/// returned twist exponentiates to that rotation and translation.
Twist sample_perturbation(Rng& rng, double max_rot_deg, double max_trans);

PointCloud corrupt_noise(const PointCloud& cloud, double stddev, std::uint64_t seed);
/// Keeps round(keep_fraction * N) points, sampled without replacement.
PointCloud corrupt_sparsify(const PointCloud& cloud, double keep_fraction, std::uint64_t seed);
/// Keeps the round(keep_fraction * N) points with the largest projection on
/// camera_dir.
PointCloud corrupt_halfspace(const PointCloud& cloud, const Vec3& camera_dir, double keep_fraction);

/// Uniformly random subset of `count` indices out of [0, n), sorted.
std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index count, Rng& rng);

// ---------------------------------------------------------------------------
// Voxel partitions

struct VoxelGrid {
  std::array<int, 3> dims{1, 1, 1};
  Vec3 lower = Vec3::Zero();
  Vec3 upper = Vec3::Zero();

  int cell_count() const { return dims[0] * dims[1] * dims[2]; }
  /// Linear cell index of p; points outside the box clamp to the border cell.
  int cell_of(const Vec3& p) const;
};

struct Voxel {
  int cell = 0;
  std::vector<Eigen::Index> indices;  // into the parent cloud
  Vec3 center = Vec3::Zero();          // centroid of the retained points
};

struct VoxelPartition {
  VoxelGrid grid;
  std::vector<Voxel> voxels;  // ordered by cell index
};

struct VoxelConfig {
  std::array<int, 3> dims{2, 2, 2};
  int min_points = 16;
  int max_points_per_voxel = 1000;
  std::uint64_t seed = 0;
};

/// Uniform grid over the cloud's bounding box. Throws DegenerateInput when
/// every voxel falls below min_points.
VoxelPartition voxelize(const PointCloud& cloud, const VoxelConfig& cfg);

/// Bins `cloud` into an existing grid with the same thresholds. May return an
/// empty voxel list.
VoxelPartition bin_into_grid(const PointCloud& cloud, const VoxelGrid& grid, const VoxelConfig& cfg);

/// Columns of `cloud` at `indices`, shifted by -center.
Points gather_centered(const Points& cloud, const std::vector<Eigen::Index>& indices, const Vec3& center);

}  // namespace lkreg
