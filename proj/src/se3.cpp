#include "lkreg/se3.hpp"

#include "lkreg/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>

namespace lkreg {

namespace {

constexpr double kSmallAngle = 1e-8;
constexpr double kOrthoTol = 1e-9;

// Coefficients of the closed-form exponential:
//   a = sin(t)/t, b = (1 - cos(t))/t^2, c = (t - sin(t))/t^3.
struct ExpCoeffs {
  double a, b, c;
};

ExpCoeffs exp_coeffs(double theta) {
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    const double t4 = t2 * t2;
    return {1.0 - t2 / 6.0 + t4 / 120.0, 0.5 - t2 / 24.0 + t4 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0};
  }
  const double s = std::sin(theta);
  const double half = std::sin(0.5 * theta);
  const double t2 = theta * theta;
  return {s / theta, 2.0 * half * half / t2, (theta - s) / (t2 * theta)};
}

Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

}  // namespace

Twist::Twist(const Vec6& xi) : xi_(xi) {
  if (!xi_.allFinite()) throw InvalidArgument("twist has non-finite entries");
}

Twist::Twist(const Vec3& omega, const Vec3& v) {
  xi_ << omega, v;
  if (!xi_.allFinite()) throw InvalidArgument("twist has non-finite entries");
}

RigidTransform::RigidTransform(const Mat4& m) : mat_(m) {
  if (!m.allFinite()) throw InvalidArgument("transform has non-finite entries");
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0)
    throw InvalidArgument("transform bottom row must be (0,0,0,1)");
  const Mat3 r = m.topLeftCorner<3, 3>();
  if ((r.transpose() * r - Mat3::Identity()).norm() >= kOrthoTol)
    throw InvalidArgument("rotation block is not orthonormal");
  if (r.determinant() <= 0.0) throw InvalidArgument("rotation block has det <= 0");
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : RigidTransform([&] {
        Mat4 m = Mat4::Identity();
        m.topLeftCorner<3, 3>() = rotation;
        m.topRightCorner<3, 1>() = translation;
        return m;
      }()) {}

namespace se3 {

Mat3 skew(const Vec3& w) {
  Mat3 k;
  k << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return k;
}

Mat4 generator(int p) {
  if (p < 0 || p >= 6) throw InvalidArgument("generator index out of range");
  Mat4 t = Mat4::Zero();
  if (p < 3) {
    Vec3 e = Vec3::Zero();
    e[p] = 1.0;
    t.topLeftCorner<3, 3>() = skew(e);
  } else {
    t(p - 3, 3) = 1.0;
  }
  return t;
}

Mat4 hat(const Twist& xi) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = skew(xi.omega());
  m.topRightCorner<3, 1>() = xi.v();
  return m;
}

RigidTransform exp(const Twist& xi) {
  const Vec3 w = xi.omega();
  const double theta = w.norm();
  const ExpCoeffs k = exp_coeffs(theta);
  const Mat3 wx = skew(w);
  const Mat3 wx2 = wx * wx;
  Mat3 r = Mat3::Identity() + k.a * wx + k.b * wx2;
  const Mat3 v = Mat3::Identity() + k.b * wx + k.c * wx2;
  return RigidTransform(r, v * xi.v());
}

Twist log(const RigidTransform& g) {
  const Mat3 r = g.rotation();
  const Vec3 axis_sin = 0.5 * vee(r - r.transpose());  // sin(theta) * axis
  const double cos_theta = 0.5 * (r.trace() - 1.0);
  const double theta = std::atan2(axis_sin.norm(), cos_theta);
  if (theta > std::numbers::pi - 1e-6)
    throw SingularityError("log undefined near rotation angle pi");

  Vec3 w;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    w = axis_sin * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0);
  } else {
    w = axis_sin * (theta / std::sin(theta));
  }

  // V^{-1} = I - wx/2 + d wx^2 with d = (1 - a / (2 b)) / theta^2.
  double d;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    const ExpCoeffs k = exp_coeffs(theta);
    d = (1.0 - k.a / (2.0 * k.b)) / (theta * theta);
  }
  const Mat3 wx = skew(w);
  const Mat3 v_inv = Mat3::Identity() - 0.5 * wx + d * wx * wx;
  return Twist(w, v_inv * g.translation());
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  const Mat3 r = a.rotation() * b.rotation();
  const Vec3 t = a.rotation() * b.translation() + a.translation();
  return RigidTransform(r, t);
}

RigidTransform inverse(const RigidTransform& g) {
  const Mat3 rt = g.rotation().transpose();
  return RigidTransform(rt, -(rt * g.translation()));
}

Points apply(const RigidTransform& g, const Points& p) {
  Points out = g.rotation() * p;
  out.colwise() += g.translation();
  return out;
}

double rotation_angle(const RigidTransform& g) {
  const Mat3 r = g.rotation();
  const double s = 0.5 * vee(r - r.transpose()).norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

Mat6 adjoint_translation(const Vec3& center) {
  if (!center.allFinite()) throw InvalidArgument("center has non-finite entries");
  Mat6 m = Mat6::Identity();
  m.bottomLeftCorner<3, 3>() = -skew(center);
  return m;
}

std::array<Mat4, 6> exp_derivatives(const Twist& xi) {
  // exp([[X, E], [0, X]]) = [[exp X, D_E exp(X)], [0, exp X]].
  const Mat4 x = hat(xi);
  std::array<Mat4, 6> out;
  for (int p = 0; p < 6; ++p) {
    Eigen::Matrix<double, 8, 8> block = Eigen::Matrix<double, 8, 8>::Zero();
    block.topLeftCorner<4, 4>() = x;
    block.bottomRightCorner<4, 4>() = x;
    block.topRightCorner<4, 4>() = generator(p);
    const Eigen::Matrix<double, 8, 8> e = block.exp();
    out[p] = e.topRightCorner<4, 4>();
  }
  return out;
}

}  // namespace se3
}  // namespace lkreg
