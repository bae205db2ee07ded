#include "lkreg/errors.hpp"
#include "lkreg/se3.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace lkreg;

namespace {

// Truncated power series of the matrix exponential.
Mat4 series_exp(const Mat4& a, int terms = 30) {
  Mat4 sum = Mat4::Identity(), term = Mat4::Identity();
  for (int k = 1; k < terms; ++k) {
    term = term * a / k;
    sum += term;
  }
  return sum;
}

Vec6 random_twist(std::mt19937_64& rng, double max_angle, double max_trans) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec3 w(g(rng), g(rng), g(rng));
  Vec3 v(g(rng), g(rng), g(rng));
  Vec6 xi;
  xi << w.normalized() * max_angle * u(rng), v.normalized() * max_trans * u(rng);
  return xi;
}

}  // namespace

TEST_CASE("exp matches the power series") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vec6 xi = random_twist(rng, 3.0, 2.0);
    const Mat4 ref = series_exp(se3::hat(Twist(xi)));
    CHECK((se3::exp(Twist(xi)).matrix() - ref).norm() < 1e-12);
  }
}

TEST_CASE("exp near zero rotation uses the small-angle branch consistently") {
  for (double a : {0.0, 1e-12, 1e-9, 1e-7, 1e-5}) {
    Vec6 xi;
    xi << a, -a, 0.5 * a, 0.3, -0.2, 0.1;
    const Mat4 ref = series_exp(se3::hat(Twist(xi)));
    CHECK((se3::exp(Twist(xi)).matrix() - ref).norm() < 1e-14);
  }
}

TEST_CASE("exp of zero is identity and pure translations translate") {
  CHECK(se3::exp(Twist(Vec6::Zero())).matrix() == Mat4::Identity());
  Vec6 xi;
  xi << 0, 0, 0, 1, 2, 3;
  const RigidTransform g = se3::exp(Twist(xi));
  CHECK(g.rotation() == Mat3::Identity());
  CHECK((g.translation() - Vec3(1, 2, 3)).norm() == 0.0);
}

TEST_CASE("log inverts exp away from pi") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Vec6 xi = random_twist(rng, std::numbers::pi - 0.01, 3.0);
    CHECK((se3::log(se3::exp(Twist(xi))).vec() - xi).norm() < 1e-9);
  }
}

TEST_CASE("log raises near a half turn") {
  Vec6 xi;
  xi << std::numbers::pi - 1e-8, 0, 0, 0.1, 0, 0;
  CHECK_THROWS_AS(se3::log(se3::exp(Twist(xi))), SingularityError);
}

TEST_CASE("generators are the hat images of the unit twists") {
  for (int p = 0; p < 6; ++p) {
    Vec6 e = Vec6::Zero();
    e[p] = 1.0;
    CHECK(se3::generator(p) == se3::hat(Twist(e)));
  }
  CHECK_THROWS_AS(se3::generator(6), InvalidArgument);
}

TEST_CASE("skew reproduces the cross product") {
  const Vec3 a(0.3, -1.2, 2.0), b(1.5, 0.1, -0.7);
  CHECK((se3::skew(a) * b - a.cross(b)).norm() < 1e-15);
}

TEST_CASE("compose and inverse") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const RigidTransform g = se3::exp(Twist(random_twist(rng, 3.0, 2.0)));
    const RigidTransform h = se3::exp(Twist(random_twist(rng, 3.0, 2.0)));
    CHECK((se3::compose(g, se3::inverse(g)).matrix() - Mat4::Identity()).norm() < 1e-14);
    CHECK((se3::compose(g, h).matrix() - g.matrix() * h.matrix()).norm() < 1e-14);
    const Vec3 p(0.2, -0.4, 0.9);
    Points one(3, 1);
    one.col(0) = p;
    CHECK((se3::apply(g, one).col(0) - (g.rotation() * p + g.translation())).norm() < 1e-15);
  }
}

TEST_CASE("rigid transforms validate their matrix") {
  Mat4 m = Mat4::Identity();
  m(0, 0) = 1.01;
  CHECK_THROWS_AS(RigidTransform{m}, InvalidArgument);
  m = Mat4::Identity();
  m(0, 0) = -1.0;  // reflection
  CHECK_THROWS_AS(RigidTransform{m}, InvalidArgument);
  m = Mat4::Identity();
  m(3, 0) = 0.5;
  CHECK_THROWS_AS(RigidTransform{m}, InvalidArgument);
  m = Mat4::Identity();
  m(1, 3) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(RigidTransform{m}, InvalidArgument);
}

TEST_CASE("twists reject non-finite entries") {
  Vec6 xi = Vec6::Zero();
  xi[4] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(Twist{xi}, InvalidArgument);
}

TEST_CASE("rotation angle") {
  Vec6 xi;
  xi << 0, 0, 0.7, 1, 1, 1;
  CHECK(se3::rotation_angle(se3::exp(Twist(xi))) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("translation adjoint conditions the warp Jacobian") {
  // [skew(q) | -I] * Adj(c) == [skew(q + c) | -I]
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const Vec3 q(g(rng), g(rng), g(rng)), c(g(rng), g(rng), g(rng));
    Eigen::Matrix<double, 3, 6> local, global;
    local << se3::skew(q), -Mat3::Identity();
    global << se3::skew(q + c), -Mat3::Identity();
    CHECK((local * se3::adjoint_translation(c) - global).norm() < 1e-14);
  }
}

TEST_CASE("translation adjoint maps global twists to the centered frame") {
  // exp(-xi) (q + c) - c == exp(-Adj(c) xi) q to first order in xi.
  const Vec3 q(0.3, -0.2, 0.5), c(1.0, 2.0, -0.5);
  Vec6 dir;
  dir << 0.3, -0.1, 0.4, 0.2, 0.5, -0.3;
  const double h = 1e-7;
  Points pq(3, 1), pc(3, 1);
  pq.col(0) = q;
  pc.col(0) = q + c;
  const Vec3 lhs = se3::apply(se3::exp(Twist(Vec6(-h * dir))), pc).col(0) - c;
  const Vec3 rhs = se3::apply(se3::exp(Twist(Vec6(-h * se3::adjoint_translation(c) * dir))), pq).col(0);
  CHECK((lhs - rhs).norm() < 1e-12);
}

TEST_CASE("exp derivatives match central differences") {
  std::mt19937_64 rng(5);
  const double h = 1e-6;
  for (int i = 0; i < 20; ++i) {
    const Vec6 xi = random_twist(rng, 2.5, 1.5);
    const auto d = se3::exp_derivatives(Twist(xi));
    for (int p = 0; p < 6; ++p) {
      Vec6 e = Vec6::Zero();
      e[p] = h;
      const Mat4 fd = (se3::exp(Twist(Vec6(xi + e))).matrix() - se3::exp(Twist(Vec6(xi - e))).matrix()) / (2 * h);
      CHECK((d[static_cast<std::size_t>(p)] - fd).norm() < 1e-8);
    }
  }
}

TEST_CASE("exp derivatives at zero are the generators") {
  const auto d = se3::exp_derivatives(Twist(Vec6::Zero()));
  for (int p = 0; p < 6; ++p) CHECK((d[static_cast<std::size_t>(p)] - se3::generator(p)).norm() < 1e-15);
}
