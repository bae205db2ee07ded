#pragma once

#include <Eigen/Dense>

#include <array>

namespace lkreg {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
/// Points stored column-wise: one column per point.
using Points = Eigen::Matrix<double, 3, Eigen::Dynamic>;

/// Exponential-map coordinates of se(3), ordered (w_x, w_y, w_z, v_x, v_y, v_z).
/// Rotation first everywhere in this library.
class Twist {
 public:
  Twist() : xi_(Vec6::Zero()) {}
  /// Throws InvalidArgument on non-finite entries.
  explicit Twist(const Vec6& xi);
  Twist(const Vec3& omega, const Vec3& v);

  const Vec6& vec() const { return xi_; }
  Vec3 omega() const { return xi_.head<3>(); }
  Vec3 v() const { return xi_.tail<3>(); }
  double operator[](int i) const { return xi_[i]; }
  Twist operator-() const { return Twist(Vec6(-xi_)); }

 private:
  Vec6 xi_;
};

/// Element of SE(3) as a homogeneous 4x4 matrix.
///
/// Construction validates the bottom row and orthonormality of the rotation
/// block (||R^T R - I||_F < 1e-9, det R > 0).
class RigidTransform {
 public:
  RigidTransform() : mat_(Mat4::Identity()) {}
  explicit RigidTransform(const Mat4& m);
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }

  const Mat4& matrix() const { return mat_; }
  Mat3 rotation() const { return mat_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return mat_.topRightCorner<3, 1>(); }

  Vec3 operator*(const Vec3& p) const { return rotation() * p + translation(); }

 private:
  Mat4 mat_;
};

namespace se3 {

Mat3 skew(const Vec3& w);

/// Generator T_p for p in [0, 6): rotations about x,y,z then translations.
Mat4 generator(int p);
/// Sum_p xi_p T_p.
Mat4 hat(const Twist& xi);

RigidTransform exp(const Twist& xi);
/// Throws SingularityError when the rotation angle is within 1e-6 of pi.
Twist log(const RigidTransform& g);

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform inverse(const RigidTransform& g);
Points apply(const RigidTransform& g, const Points& p);

/// Rotation angle of g in radians, in [0, pi].
double rotation_angle(const RigidTransform& g);

/// Maps a global twist to the equivalent twist expressed in a frame whose
/// origin sits at `center` (axes unchanged): [[I, 0], [-skew(c), I]].
Mat6 adjoint_translation(const Vec3& center);

/// Directional derivative of exp at xi along each basis twist e_p, i.e.
/// d/dt exp(xi + t e_p) at t = 0.
std::array<Mat4, 6> exp_derivatives(const Twist& xi);

}  // namespace se3
}  // namespace lkreg
