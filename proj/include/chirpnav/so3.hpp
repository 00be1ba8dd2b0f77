#pragma once

// Quaternion and rotation helpers. Hamilton convention, body-to-world,
// right (local) perturbation q <- q * Exp(dtheta) throughout.

#include "chirpnav/common.hpp"

#include <algorithm>

#include <Eigen/Core>

namespace chirpnav::so3 {

using Mat4 = Eigen::Matrix4d;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// Exact quaternion exponential of a rotation vector.
inline Quat exp(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z());
    return q.normalized();
  }
  const double half = 0.5 * angle;
  const Vec3 axis = rotvec / angle;
  const double s = std::sin(half);
  return Quat(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

inline Vec3 log(const Quat& q_in) {
  Quat q = q_in.w() < 0.0 ? Quat(-q_in.coeffs()) : q_in;
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  return 2.0 * std::atan2(s, q.w()) * v / s;
}

/// Small-angle error 2*[q]_xyz, sign-normalized to w >= 0.
inline Vec3 vec2(const Quat& q) { return q.w() < 0.0 ? Vec3(-2.0 * q.vec()) : Vec3(2.0 * q.vec()); }

/// Left-multiplication matrix: (p * q) = left(p) * [w x y z]^T of q.
inline Mat4 left(const Quat& p) {
  Mat4 m;
  m << p.w(), -p.x(), -p.y(), -p.z(),
       p.x(), p.w(), -p.z(), p.y(),
       p.y(), p.z(), p.w(), -p.x(),
       p.z(), -p.y(), p.x(), p.w();
  return m;
}

/// Right-multiplication matrix: (p * q) = right(q) * [w x y z]^T of p.
inline Mat4 right(const Quat& q) {
  Mat4 m;
  m << q.w(), -q.x(), -q.y(), -q.z(),
       q.x(), q.w(), q.z(), -q.y(),
       q.y(), -q.z(), q.w(), q.x(),
       q.z(), q.y(), -q.x(), q.w();
  return m;
}

inline Quat from_yaw(double yaw) { return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())); }

inline Quat from_euler(double roll, double pitch, double yaw) {
  return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
              Eigen::AngleAxisd(roll, Vec3::UnitX()));
}

/// ZYX Euler angles (roll, pitch, yaw).
inline Vec3 to_euler(const Quat& q) {
  const Mat3 r = q.toRotationMatrix();
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  return {roll, pitch, yaw};
}

inline double yaw_of(const Quat& q) { return to_euler(q).z(); }

/// Geodesic angle between two attitudes, radians in [0, pi].
inline double angle_between(const Quat& a, const Quat& b) {
  return log(a.conjugate() * b).norm();
}

}  // namespace chirpnav::so3
