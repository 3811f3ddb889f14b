#include "core/pose.hpp"

#include <cmath>

namespace cryoforge {

Mat3 align_to_z(const Vec3& d_in) {
  Vec3 d = d_in.normalized();
  double c = d.z;
  if (c > 1.0 - 1e-14) return Mat3::identity();
  if (c < -1.0 + 1e-14) {
    // d = -z: rotate by pi about x (fixed convention so round trips are stable).
    return Mat3::axis_angle({1, 0, 0}, kPi);
  }
  Vec3 axis = d.cross(Vec3{0, 0, 1}).normalized();
  return Mat3::axis_angle(axis, std::acos(c));
}

Mat3 pose_to_rotation(const Pose& p) { return Mat3::rot_z(p.inplane_angle) * align_to_z(p.direction); }

Pose rotation_to_pose(const Mat3& r, const Vec2& shift) {
  Pose p;
  // R^T e_z is the third row of R.
  p.direction = Vec3{r.at(2, 0), r.at(2, 1), r.at(2, 2)}.normalized();
  Mat3 rz = r * align_to_z(p.direction).transposed();
  p.inplane_angle = std::atan2(rz.at(1, 0), rz.at(0, 0));
  if (p.inplane_angle < 0) p.inplane_angle += 2 * kPi;
  p.shift = shift;
  return p;
}

}  // namespace cryoforge
