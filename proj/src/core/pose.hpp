#pragma once

#include "core/types.hpp"

namespace cryoforge {

/**
 * A particle pose: viewing direction (unit vector, the beam axis expressed in
 * the particle frame), an in-plane rotation angle, and a 2D shift in Angstrom.
 *
 * The rotation R = Rz(inplane) * A(direction), where A is the minimal rotation
 * taking direction to +z, maps particle coordinates to camera coordinates; the
 * projection integrates along camera z. Equivalently R^T e_z = direction.
 */
struct Pose {
  Vec3 direction{0, 0, 1};
  double inplane_angle = 0;
  Vec2 shift{0, 0};
};

/** Minimal rotation taking unit vector d to +z (A(d) * d = e_z). */
Mat3 align_to_z(const Vec3& d);

Mat3 pose_to_rotation(const Pose& p);

/** Inverse of pose_to_rotation for orthonormal R with det +1; shift passes through. */
Pose rotation_to_pose(const Mat3& r, const Vec2& shift = {0, 0});

}  // namespace cryoforge
