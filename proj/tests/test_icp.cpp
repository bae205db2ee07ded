#include "lkreg/cloud.hpp"
#include "lkreg/errors.hpp"
#include "lkreg/icp.hpp"

#include <doctest.h>

#include <numbers>

using namespace lkreg;

namespace {

RigidTransform make_motion(Vec3 axis, double deg, Vec3 t) {
  return RigidTransform(Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, axis.normalized()).toRotationMatrix(), t);
}

std::pair<Eigen::Index, double> brute_nearest(const Points& p, const Vec3& q) {
  Eigen::Index best = -1;
  double d2 = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    const double d = (p.col(i) - q).squaredNorm();
    if (d < d2) {
      d2 = d;
      best = i;
    }
  }
  return {best, d2};
}

double weighted_cost(const RigidTransform& g, const Points& x, const Points& y, const Eigen::VectorXd& w) {
  return ((se3::apply(g, x) - y).colwise().squaredNorm().transpose().array() * w.array()).sum();
}

}  // namespace

TEST_CASE("kd-tree agrees with brute force") {
  const Points p = generate_primitive(PrimitiveKind::kTorus, 2000, 1).points();
  const KdTree tree(p);
  Rng rng(2);
  std::uniform_real_distribution<double> u(-1.6, 1.6);
  for (int i = 0; i < 500; ++i) {
    const Vec3 q(u(rng), u(rng), u(rng));
    const auto [idx, d2] = tree.nearest(q);
    const auto [bidx, bd2] = brute_nearest(p, q);
    CHECK(idx == bidx);
    CHECK(d2 == bd2);
  }
}

TEST_CASE("kd-tree breaks ties toward the lowest index") {
  // Integer lattice with duplicates: many equidistant candidates.
  Points p(3, 54);
  int c = 0;
  for (int rep = 0; rep < 2; ++rep)
    for (int x = 0; x < 3; ++x)
      for (int y = 0; y < 3; ++y)
        for (int z = 0; z < 3; ++z) p.col(c++) = Vec3(x, y, z);
  const KdTree tree(p);
  for (double qx : {0.5, 1.0, 1.5})
    for (double qy : {0.5, 1.0})
      for (double qz : {0.0, 0.5, 2.5}) {
        const Vec3 q(qx, qy, qz);
        CHECK(tree.nearest(q).first == brute_nearest(p, q).first);
      }
  CHECK_THROWS_AS(KdTree(Points(3, 0)), DegenerateInput);
}

TEST_CASE("Procrustes recovers an exact rigid motion") {
  const Points x = generate_varied_primitive(PrimitiveKind::kCube, 100, 3).points();
  const RigidTransform gt = make_motion(Vec3(1, -2, 0.5), 130.0, Vec3(0.4, -1.0, 2.0));
  const RigidTransform g = procrustes_fit(x, se3::apply(gt, x));
  CHECK((g.matrix() - gt.matrix()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("weighted Procrustes is a local minimum of its objective") {
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 0.05);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  const Points x = generate_varied_primitive(PrimitiveKind::kSphere, 60, 4).points();
  Points y = se3::apply(make_motion(Vec3(0, 1, 1), 40.0, Vec3(0.1, 0.2, 0.3)), x);
  for (Eigen::Index i = 0; i < y.cols(); ++i) y.col(i) += Vec3(n(rng), n(rng), n(rng));
  Eigen::VectorXd w(60);
  for (Eigen::Index i = 0; i < 60; ++i) w[i] = u(rng);
  const RigidTransform g = procrustes_fit(x, y, w);
  CHECK(g.rotation().determinant() == doctest::Approx(1.0).epsilon(1e-12));
  const double best = weighted_cost(g, x, y, w);
  for (int k = 0; k < 6; ++k)
    for (double h : {1e-4, -1e-4}) {
      Vec6 xi = Vec6::Zero();
      xi[k] = h;
      CHECK(weighted_cost(se3::compose(se3::exp(Twist(xi)), g), x, y, w) >= best);
    }
}

TEST_CASE("Procrustes corrects reflections") {
  // A mirrored planar target would be matched best by a reflection.
  Points x(3, 4), y(3, 4);
  x << 1, -1, 0, 0,  //
      0, 0, 1, -1,   //
      0, 0, 0, 0;
  y = x;
  y.row(0) *= -1.0;
  y.row(1) *= 0.5;
  const RigidTransform g = procrustes_fit(x, y);
  CHECK(g.rotation().determinant() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Procrustes rejects degenerate inputs") {
  Points line(3, 5);
  for (int i = 0; i < 5; ++i) line.col(i) = Vec3(i, 0, 0);
  Points pt = Points::Zero(3, 5);
  CHECK_THROWS_AS(procrustes_fit(pt, pt), RankDeficient);
  CHECK_THROWS_AS(procrustes_fit(line.leftCols(2), line.leftCols(2)), InvalidArgument);
  CHECK_THROWS_AS(procrustes_fit(line, line.leftCols(4)), InvalidArgument);
  CHECK_THROWS_AS(procrustes_fit(line, line, Eigen::VectorXd::Zero(5)), InvalidArgument);
}

TEST_CASE("ICP on an aligned pair stops after one iteration") {
  const PointCloud c = generate_primitive(PrimitiveKind::kTorus, 500, 5);
  const RegistrationResult r = icp_register(c, c, {});
  CHECK(r.termination == Termination::kConverged);
  CHECK(r.iterations == 1);
  CHECK((r.estimate.matrix() - Mat4::Identity()).norm() < 1e-12);
  CHECK(r.residual_norms.front() == 0.0);
  CHECK(r.jacobian_builds == 0);
}

TEST_CASE("ICP recovers a small motion and its objective never increases") {
  const PointCloud src = normalize_unit_box(generate_varied_primitive(PrimitiveKind::kTorus, 200, 6));
  const RigidTransform gt = make_motion(Vec3(1, 1, 0), 5.0, Vec3(0.02, -0.01, 0.01));
  IcpConfig cfg;
  cfg.max_iters = 50;
  const RegistrationResult r = icp_register(src, apply(gt, src), cfg);
  CHECK(r.termination == Termination::kConverged);
  CHECK(se3::rotation_angle(se3::compose(se3::inverse(gt), r.estimate)) < 1e-6);
  for (std::size_t i = 1; i < r.residual_norms.size(); ++i)
    CHECK(r.residual_norms[i] <= r.residual_norms[i - 1] + 1e-12);
}

TEST_CASE("ICP cannot observe a rotation of a sphere") {
  const PointCloud src = generate_primitive(PrimitiveKind::kSphere, 600, 7);
  const RigidTransform gt = make_motion(Vec3(0, 0, 1), 40.0, Vec3::Zero());
  IcpConfig cfg;
  cfg.max_iters = 100;
  const RegistrationResult r = icp_register(src, apply(gt, src), cfg);
  // Every rotation about the center fits equally well, so ICP stays near the identity.
  CHECK(se3::rotation_angle(se3::compose(se3::inverse(gt), r.estimate)) * 180.0 / std::numbers::pi > 5.0);
}

TEST_CASE("ICP distance cap and configuration") {
  const PointCloud src = generate_primitive(PrimitiveKind::kSphere, 100, 8);
  Points far = src.points();
  far.colwise() += Vec3(10, 0, 0);
  IcpConfig cfg;
  cfg.max_correspondence_dist = 0.5;
  const RegistrationResult r = icp_register(src, PointCloud(far), cfg);
  CHECK(r.termination == Termination::kRankDeficient);
  CHECK(r.estimate.matrix() == Mat4::Identity());
  IcpConfig bad;
  bad.max_iters = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.max_correspondence_dist = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.tol = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
