#include "lkreg/cloud.hpp"
#include "lkreg/errors.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

using namespace lkreg;

namespace {

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() / "lkreg_cloud_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

Points three_points() {
  Points p(3, 3);
  p << 0.0, 1.5, -2.0,  //
      0.25, 0.0, 3.0,   //
      -1.0, 2.0, 0.125;
  return p;
}

}  // namespace

TEST_CASE("xyz parsing skips comments and blank lines") {
  const PointCloud c = parse_xyz("# header\n\n0 0.25 -1\n1.5 0 2   # trailing\n-2 3 0.125 9 9\n");
  CHECK(c.size() == 3);
  CHECK(c.points() == three_points());
}

TEST_CASE("xyz parse errors carry the line number") {
  try {
    parse_xyz("0 0 0\n\n1 2\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  try {
    parse_xyz("0 0 0\n1 x 2\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_xyz("# nothing\n"), ParseError);
}

TEST_CASE("OFF parsing reads vertices and ignores faces") {
  const PointCloud c = parse_off("OFF\n3 1 0\n0 0.25 -1\n1.5 0 2\n-2 3 0.125\n3 0 1 2\n");
  CHECK(c.points() == three_points());
  const PointCloud inline_counts = parse_off("OFF 3 0 0\n0 0.25 -1\n1.5 0 2\n-2 3 0.125\n");
  CHECK(inline_counts.points() == three_points());
  CHECK_THROWS_AS(parse_off("PLY\n3 0 0\n"), ParseError);
  CHECK_THROWS_AS(parse_off("OFF\n4 0 0\n0 0 0\n1 1 1\n"), ParseError);
  CHECK_THROWS_AS(parse_off("OFF\n0 0 0\n"), ParseError);
}

TEST_CASE("PLY parsing honours property order and extra elements") {
  const std::string text =
      "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 3\n"
      "property float z\nproperty float x\nproperty uchar red\nproperty float y\n"
      "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
      "-1 0 7 0.25\n2 1.5 7 0\n0.125 -2 7 3\n3 0 1 2\n";
  CHECK(parse_ply_ascii(text).points() == three_points());
  CHECK_THROWS_AS(parse_ply_ascii("ply\nformat binary_little_endian 1.0\nelement vertex 1\nend_header\n"),
                  UnsupportedFormat);
  CHECK_THROWS_AS(parse_ply_ascii("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n"),
                  ParseError);
  CHECK_THROWS_AS(parse_ply_ascii("plx\n"), ParseError);
}

TEST_CASE("save and load round-trip in every format") {
  const PointCloud c = generate_primitive(PrimitiveKind::kTorus, 200, 3);
  for (const char* ext : {".xyz", ".off", ".ply"}) {
    const auto path = scratch_dir() / (std::string("roundtrip") + ext);
    save_cloud(c, path);
    const PointCloud back = load_cloud(path);
    REQUIRE(back.size() == c.size());
    CHECK((back.points() - c.points()).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("format names and extensions") {
  CHECK(parse_format("XYZ") == CloudFormat::kXyz);
  CHECK(parse_format("off") == CloudFormat::kOff);
  CHECK(parse_format("Ply") == CloudFormat::kPlyAscii);
  CHECK_THROWS_AS(parse_format("pcd"), UnsupportedFormat);
  CHECK(format_from_path("a/b.PLY") == CloudFormat::kPlyAscii);
  CHECK_THROWS_AS(format_from_path("cloud.pcd"), UnsupportedFormat);
  CHECK_THROWS_AS(load_cloud(scratch_dir() / "missing.xyz"), Error);
}

TEST_CASE("point clouds reject empty and non-finite data") {
  CHECK_THROWS_AS(PointCloud{Points(3, 0)}, DegenerateInput);
  Points p = three_points();
  p(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(PointCloud{p}, InvalidArgument);
}

TEST_CASE("primitives lie on their canonical surfaces") {
  const double tol = 1e-12;
  {
    const Points p = generate_primitive(PrimitiveKind::kSphere, 500, 1).points();
    for (Eigen::Index i = 0; i < p.cols(); ++i) CHECK(std::abs(p.col(i).norm() - 1.0) < tol);
  }
  {
    const Points p = generate_primitive(PrimitiveKind::kCube, 500, 1).points();
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
      CHECK(p.col(i).cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(tol));
    }
  }
  {
    const Points p = generate_primitive(PrimitiveKind::kCylinder, 500, 1).points();
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
      const double r = p.col(i).head<2>().norm();
      const bool side = std::abs(r - 1.0) < tol && std::abs(p(2, i)) <= 1.0 + tol;
      const bool cap = std::abs(std::abs(p(2, i)) - 1.0) < tol && r <= 1.0 + tol;
      CHECK((side || cap));
    }
  }
  {
    const Points p = generate_primitive(PrimitiveKind::kTorus, 500, 1).points();
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
      const double ring = p.col(i).head<2>().norm() - 1.0;
      CHECK(std::hypot(ring, p(2, i)) == doctest::Approx(0.35).epsilon(1e-10));
    }
  }
  {
    const Points p = generate_primitive(PrimitiveKind::kPlaneWithBumps, 500, 1).points();
    CHECK(p.row(0).cwiseAbs().maxCoeff() <= 1.0);
    CHECK(p.row(1).cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("sphere samples are area-uniform") {
  // For a uniform sphere each coordinate is uniform on [-1, 1].
  const Points p = generate_primitive(PrimitiveKind::kSphere, 20000, 9).points();
  std::array<int, 4> bins{};
  for (Eigen::Index i = 0; i < p.cols(); ++i) ++bins[static_cast<std::size_t>(std::min(3, int((p(2, i) + 1) * 2)))];
  for (int b : bins) CHECK(std::abs(b - 5000) < 300);
}

TEST_CASE("generators are deterministic per seed") {
  for (PrimitiveKind k : kAllPrimitives) {
    CHECK(generate_primitive(k, 64, 5).points() == generate_primitive(k, 64, 5).points());
    CHECK(generate_primitive(k, 64, 5).points() != generate_primitive(k, 64, 6).points());
    CHECK(parse_primitive(to_string(k)) == k);
  }
  CHECK(generate_scene(3, 300, 2).points() == generate_scene(3, 300, 2).points());
  CHECK(generate_scene(3, 300, 2).size() == 300);
  CHECK_THROWS_AS(generate_primitive(PrimitiveKind::kCube, 7, 0), InvalidArgument);
  CHECK_THROWS_AS(parse_primitive("cone"), InvalidArgument);
  CHECK_THROWS_AS(generate_scene(0, 100, 0), InvalidArgument);
}

TEST_CASE("varied primitives are a scaled and rotated copy") {
  const Points base = generate_primitive(PrimitiveKind::kSphere, 300, 11).points();
  const Points var = generate_varied_primitive(PrimitiveKind::kSphere, 300, 11).points();
  // Same centroid-free shape up to a linear map: fit it by least squares and check the residual.
  const Mat3 a = (var * base.transpose()) * (base * base.transpose()).inverse();
  CHECK((a * base - var).norm() < 1e-9);
  const Eigen::JacobiSVD<Mat3> svd(a);
  const Vec3 s = svd.singularValues();
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[2] >= 0.4 - 1e-12);
  CHECK(s[2] <= 0.5 + 1e-12);
}

TEST_CASE("normalize_unit_box centers and scales") {
  const PointCloud c = generate_varied_primitive(PrimitiveKind::kCube, 400, 4);
  Points shifted = c.points();
  shifted.colwise() += Vec3(5, -3, 2);
  const PointCloud n = normalize_unit_box(c.with_points(shifted * 7.0));
  CHECK(n.centroid().norm() < 1e-14);
  CHECK(n.points().cwiseAbs().maxCoeff() == doctest::Approx(0.5).epsilon(1e-15));
  Points same = Points::Ones(3, 4);
  CHECK_THROWS_AS(normalize_unit_box(PointCloud(same)), DegenerateInput);
}

TEST_CASE("perturbations respect their bounds") {
  Rng rng(12);
  double max_angle = 0.0, max_t = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const RigidTransform g = se3::exp(sample_perturbation(rng, 45.0, 0.8));
    const double a = se3::rotation_angle(g) * 180.0 / std::numbers::pi;
    const double t = g.translation().norm();
    CHECK(a <= 45.0 + 1e-9);
    CHECK(t <= 0.8 + 1e-12);
    max_angle = std::max(max_angle, a);
    max_t = std::max(max_t, t);
  }
  CHECK(max_angle > 44.0);
  CHECK(max_t > 0.79);
  CHECK_THROWS_AS(sample_perturbation(rng, 180.0, 0.1), InvalidArgument);
  CHECK_THROWS_AS(sample_perturbation(rng, 10.0, -0.1), InvalidArgument);
}

TEST_CASE("noise corruption") {
  const PointCloud c = generate_primitive(PrimitiveKind::kSphere, 5000, 1);
  CHECK(corrupt_noise(c, 0.0, 3).points() == c.points());
  const Points d = corrupt_noise(c, 0.02, 3).points() - c.points();
  const double sd = std::sqrt(d.squaredNorm() / static_cast<double>(d.size()));
  CHECK(sd == doctest::Approx(0.02).epsilon(0.03));
  CHECK(corrupt_noise(c, 0.02, 3).points() == corrupt_noise(c, 0.02, 3).points());
  CHECK_THROWS_AS(corrupt_noise(c, -1.0, 3), InvalidArgument);
}

TEST_CASE("sparsify keeps a distinct subset") {
  const PointCloud c = generate_primitive(PrimitiveKind::kCube, 1000, 2);
  const PointCloud s = corrupt_sparsify(c, 0.25, 8);
  CHECK(s.size() == 250);
  std::set<std::tuple<double, double, double>> src;
  for (Eigen::Index i = 0; i < c.size(); ++i) src.insert({c.points()(0, i), c.points()(1, i), c.points()(2, i)});
  std::set<std::tuple<double, double, double>> kept;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const std::tuple<double, double, double> t{s.points()(0, i), s.points()(1, i), s.points()(2, i)};
    CHECK(src.count(t) == 1);
    kept.insert(t);
  }
  CHECK(kept.size() == 250);
  CHECK(corrupt_sparsify(c, 1.0, 8).points() == c.points());
  CHECK_THROWS_AS(corrupt_sparsify(c, 0.0, 8), InvalidArgument);
  CHECK_THROWS_AS(corrupt_sparsify(c, 0.003, 8), DegenerateInput);
}

TEST_CASE("halfspace keeps the points facing the camera") {
  const PointCloud c = generate_primitive(PrimitiveKind::kSphere, 1000, 3);
  const Vec3 dir = Vec3(1, 2, -1).normalized();
  const PointCloud h = corrupt_halfspace(c, dir * 3.0, 0.7);
  CHECK(h.size() == 700);
  const Eigen::VectorXd all = c.points().transpose() * dir;
  const Eigen::VectorXd kept = h.points().transpose() * dir;
  int above = 0;
  for (Eigen::Index i = 0; i < all.size(); ++i) above += all[i] >= kept.minCoeff() ? 1 : 0;
  CHECK(above == 700);
  CHECK_THROWS_AS(corrupt_halfspace(c, Vec3::Zero(), 0.7), InvalidArgument);
}

TEST_CASE("sampling without replacement") {
  Rng rng(4);
  const auto idx = sample_without_replacement(50, 20, rng);
  CHECK(idx.size() == 20);
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
  CHECK(idx.back() < 50);
  CHECK_THROWS_AS(sample_without_replacement(5, 6, rng), InvalidArgument);
}

TEST_CASE("voxelization matches direct binning") {
  const PointCloud c = generate_varied_primitive(PrimitiveKind::kTorus, 3000, 5);
  VoxelConfig cfg;
  cfg.dims = {3, 2, 2};
  cfg.min_points = 10;
  cfg.max_points_per_voxel = 100000;
  const VoxelPartition part = voxelize(c, cfg);

  const Vec3 lo = c.points().rowwise().minCoeff(), hi = c.points().rowwise().maxCoeff();
  std::map<int, std::vector<Eigen::Index>> ref;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    int ijk[3];
    for (int a = 0; a < 3; ++a) {
      const double f = (c.points()(a, i) - lo[a]) / (hi[a] - lo[a]);
      ijk[a] = std::min(cfg.dims[static_cast<std::size_t>(a)] - 1, int(f * cfg.dims[static_cast<std::size_t>(a)]));
    }
    ref[ijk[0] + 3 * (ijk[1] + 2 * ijk[2])].push_back(i);
  }
  std::size_t expected = 0;
  for (const auto& [cell, idx] : ref) expected += idx.size() >= 10 ? 1 : 0;
  REQUIRE(part.voxels.size() == expected);
  for (const Voxel& v : part.voxels) {
    CHECK(v.indices == ref[v.cell]);
    Vec3 mean = Vec3::Zero();
    for (Eigen::Index i : v.indices) mean += c.point(i);
    CHECK((v.center - mean / double(v.indices.size())).norm() < 1e-14);
    CHECK(gather_centered(c.points(), v.indices, v.center).rowwise().mean().norm() < 1e-14);
  }
  for (std::size_t k = 1; k < part.voxels.size(); ++k) CHECK(part.voxels[k - 1].cell < part.voxels[k].cell);
}

TEST_CASE("voxel caps subsample deterministically") {
  const PointCloud c = generate_primitive(PrimitiveKind::kSphere, 2000, 6);
  VoxelConfig cfg;
  cfg.dims = {2, 2, 2};
  cfg.min_points = 16;
  cfg.max_points_per_voxel = 37;
  const VoxelPartition a = voxelize(c, cfg), b = voxelize(c, cfg);
  REQUIRE(a.voxels.size() == 8);
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(a.voxels[k].indices.size() == 37);
    CHECK(a.voxels[k].indices == b.voxels[k].indices);
  }
  cfg.seed = 1;
  CHECK(voxelize(c, cfg).voxels[0].indices != a.voxels[0].indices);
}

TEST_CASE("voxel configuration errors") {
  const PointCloud c = generate_primitive(PrimitiveKind::kSphere, 100, 6);
  VoxelConfig cfg;
  cfg.min_points = 3;
  CHECK_THROWS_AS(voxelize(c, cfg), InvalidArgument);
  cfg.min_points = 16;
  cfg.max_points_per_voxel = 10;
  CHECK_THROWS_AS(voxelize(c, cfg), InvalidArgument);
  cfg.max_points_per_voxel = 1000;
  cfg.dims = {0, 1, 1};
  CHECK_THROWS_AS(voxelize(c, cfg), InvalidArgument);
  cfg.dims = {10, 10, 10};
  cfg.min_points = 50;
  CHECK_THROWS_AS(voxelize(c, cfg), DegenerateInput);
}

TEST_CASE("out-of-box points clamp to border cells") {
  VoxelGrid g;
  g.dims = {2, 2, 2};
  g.lower = Vec3(-1, -1, -1);
  g.upper = Vec3(1, 1, 1);
  CHECK(g.cell_of(Vec3(-5, -5, -5)) == 0);
  CHECK(g.cell_of(Vec3(5, 5, 5)) == 7);
  CHECK(g.cell_of(Vec3(0.5, -0.5, 0.5)) == 1 + 2 * 2);
  CHECK(g.cell_of(Vec3(1, 1, 1)) == 7);
}
