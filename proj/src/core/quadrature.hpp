#pragma once

#include <cstdint>
#include <vector>

#include "core/types.hpp"

namespace cryoforge {

/**
 * Discrete pose/shift quadrature. Orientation space is factored into viewing
 * directions on the sphere, in-plane rotation angles, and 2D shifts. The
 * spacing of every factor follows the retained resolution rho: rotating the
 * outermost frequency by one angular step must move it by at most one Fourier
 * lattice cell, i.e. spacing <= 1/(rho * n * voxel), and the shift lattice
 * spacing is <= 1/(2 rho).
 */

struct DirectionSet {
  std::vector<Vec3> points;     // unit vectors
  std::vector<double> weights;  // positive, sum to 1
  double angular_spacing = 0;   // measured minimal pairwise angle, radians
};

struct InplaneSet {
  std::vector<double> angles;   // radians, uniform grid on [0, 2pi)
  std::vector<double> weights;  // uniform, sum to 1
  double spacing = 0;           // exactly 2pi / count
};

struct ShiftSet {
  std::vector<Vec2> points;          // Angstrom offsets, square lattice, |t| <= extent
  std::vector<double> weights;       // uniform, sum to 1
  std::vector<double> prior_values;  // truncated Gaussian density ratios: sum(w*prior) = 1
  double spacing = 0;                // lattice step, Angstrom
  double sigma = 0;                  // prior std, Angstrom
};

struct QuadratureScheme {
  DirectionSet directions;
  InplaneSet inplane;
  ShiftSet shifts;
  double rho = 0;           // retained resolution, 1/Angstrom
  uint32_t generation = 0;  // bumped by upgrade_scheme

  size_t total_points() const {
    return directions.points.size() * inplane.angles.size() * shifts.points.size();
  }
};

/** Spherical Fibonacci lattice of m points. */
std::vector<Vec3> fibonacci_sphere(int m);

/** Minimal pairwise angle of a direction set, radians. */
double min_pairwise_angle(const std::vector<Vec3>& pts);

DirectionSet build_directions(double target_spacing);
InplaneSet build_inplane(double target_spacing);
ShiftSet build_shifts(double rho, double sigma_t, double extent_multiple = 3.0);

/**
 * Builds the full scheme for resolution rho on an n-grid with the given voxel
 * size. sigma_t is the shift prior std (Angstrom); sigma_t = 0 disables
 * shifts (single zero-shift point).
 */
QuadratureScheme build_scheme(double rho, int n, double voxel_size, double sigma_t,
                              double extent_multiple = 3.0);

/** Nearest-neighbor correspondences from old factor points to new ones. */
struct SchemeUpgrade {
  QuadratureScheme scheme;
  std::vector<int> direction_map;  // old direction index -> nearest new index
  std::vector<int> inplane_map;
  std::vector<int> shift_map;
};

SchemeUpgrade upgrade_scheme(const QuadratureScheme& old_scheme, double new_rho, int n,
                             double voxel_size);

}  // namespace cryoforge
