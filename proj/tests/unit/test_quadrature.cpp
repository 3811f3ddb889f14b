#include <doctest.h>

#include <cmath>

#include "core/pose.hpp"
#include "core/quadrature.hpp"
#include "core/rng.hpp"

using namespace cryoforge;

namespace {
// Uniform-sphere moment E[x^a y^b z^c] via the Dirichlet/Gamma identity;
// zero when any exponent is odd.
double sphere_moment(int a, int b, int c) {
  if (a % 2 || b % 2 || c % 2) return 0.0;
  auto g = [](double x) { return std::lgamma(x); };
  double log_val = g((a + 1) / 2.0) + g((b + 1) / 2.0) + g((c + 1) / 2.0) + g(1.5) -
                   (3 * g(0.5) + g((a + b + c + 3) / 2.0));
  return std::exp(log_val);
}
}  // namespace

TEST_CASE("direction sets obey the resolution spacing rule") {
  double rho = 0.1, voxel = 2.8;
  int n = 32;
  double target = 1.0 / (rho * n * voxel);
  auto set = build_directions(target);
  CHECK(set.angular_spacing <= target);
  CHECK(set.points.size() >= 6);

  double wsum = 0;
  for (double w : set.weights) wsum += w;
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& p : set.points) CHECK(p.norm() == doctest::Approx(1.0).epsilon(1e-12));

  // min pairwise angle >= 0.5 * spacing (no duplicate directions)
  CHECK(min_pairwise_angle(set.points) >= 0.5 * set.angular_spacing);

  // max/min weight ratio <= 1.5 (equal weights here)
  CHECK(*std::max_element(set.weights.begin(), set.weights.end()) /
            *std::min_element(set.weights.begin(), set.weights.end()) <=
        1.5);
}

TEST_CASE("doubling rho at least quadruples the direction count, up to rounding") {
  double voxel = 2.8;
  int n = 32;
  auto lo = build_directions(1.0 / (0.05 * n * voxel));
  auto hi = build_directions(1.0 / (0.10 * n * voxel));
  CHECK(double(hi.points.size()) >= 3.9 * double(lo.points.size()));
}

TEST_CASE("coarsest direction set covers the coordinate axes") {
  auto set = build_directions(kPi / 2.0);  // clamped to pi/4 internally
  CHECK(set.points.size() >= 6);
  Vec3 axes[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (const auto& ax : axes) {
    double best = -1;
    for (const auto& p : set.points) best = std::max(best, p.dot(ax));
    CHECK(std::acos(std::clamp(best, -1.0, 1.0)) <= 2.0 * set.angular_spacing);
  }
}

TEST_CASE("direction quadrature integrates low-order moments of the sphere") {
  auto set = build_directions(0.25);
  for (int a = 0; a <= 4; ++a)
    for (int b = 0; a + b <= 4; ++b)
      for (int c = 0; a + b + c <= 4; ++c) {
        double acc = 0;
        for (size_t i = 0; i < set.points.size(); ++i) {
          const Vec3& p = set.points[i];
          acc += set.weights[i] * std::pow(p.x, a) * std::pow(p.y, b) * std::pow(p.z, c);
        }
        CHECK(std::abs(acc - sphere_moment(a, b, c)) < 1e-2);
      }
}

TEST_CASE("inplane sets are uniform with exact spacing") {
  auto set = build_inplane(0.2232);
  CHECK(set.angles.size() == size_t(std::ceil(2 * kPi / 0.2232)));
  CHECK(set.spacing == doctest::Approx(2 * kPi / set.angles.size()).epsilon(1e-15));
  for (size_t i = 0; i < set.angles.size(); ++i)
    CHECK(set.angles[i] == doctest::Approx(i * set.spacing));
  double wsum = 0;
  for (double w : set.weights) wsum += w;
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("shift lattice spacing and prior normalization") {
  double rho = 0.1, sigma_t = 5.0;
  auto set = build_shifts(rho, sigma_t);
  CHECK(set.spacing <= 1.0 / (2 * rho) * (1 + 1e-12));
  double wsum = 0, mass = 0;
  for (size_t i = 0; i < set.points.size(); ++i) {
    wsum += set.weights[i];
    mass += set.weights[i] * set.prior_values[i];
    CHECK(set.points[i].norm() <= 3 * sigma_t * (1 + 1e-9));
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));

  // density ratios follow the Gaussian: prior(0) is the maximum
  double at_zero = 0, worst = 0;
  for (size_t i = 0; i < set.points.size(); ++i) {
    if (set.points[i].norm() < 1e-12) at_zero = set.prior_values[i];
    worst = std::max(worst, set.prior_values[i]);
  }
  CHECK(at_zero == doctest::Approx(worst));

  // spacing halves when rho doubles
  auto fine = build_shifts(2 * rho, sigma_t);
  CHECK(fine.spacing == doctest::Approx(0.5 * set.spacing));
}

TEST_CASE("zero shift sigma degenerates to the single zero shift") {
  auto set = build_shifts(0.1, 0.0);
  REQUIRE(set.points.size() == 1);
  CHECK(set.points[0].norm() == 0.0);
  CHECK(set.weights[0] == 1.0);
  CHECK(set.prior_values[0] == 1.0);
}

TEST_CASE("scheme upgrades bump the generation and map old points nearby") {
  int n = 32;
  double voxel = 2.8;
  auto s0 = build_scheme(0.05, n, voxel, 5.0);
  auto up = upgrade_scheme(s0, 0.1, n, voxel);
  CHECK(up.scheme.generation == s0.generation + 1);
  CHECK(up.scheme.rho == 0.1);
  CHECK(up.scheme.directions.points.size() > s0.directions.points.size());

  REQUIRE(up.direction_map.size() == s0.directions.points.size());
  for (size_t i = 0; i < s0.directions.points.size(); ++i) {
    Vec3 old_p = s0.directions.points[i];
    Vec3 new_p = up.scheme.directions.points[up.direction_map[i]];
    double ang = std::acos(std::clamp(old_p.dot(new_p), -1.0, 1.0));
    CHECK(ang <= s0.directions.angular_spacing);
  }
  for (size_t i = 0; i < s0.shifts.points.size(); ++i) {
    Vec2 d = s0.shifts.points[i] - up.scheme.shifts.points[up.shift_map[i]];
    CHECK(d.norm() <= s0.shifts.spacing * (1 + 1e-9));
  }
}

TEST_CASE("scheme construction validates rho") {
  CHECK_THROWS_AS(build_scheme(0.0, 32, 2.8, 5.0), Error);
  CHECK_THROWS_AS(build_scheme(0.2, 32, 2.8, 5.0), Error);  // above Nyquist (0.1786)
}

TEST_CASE("pose/rotation round trip") {
  auto rng = make_rng(31, "pose-roundtrip");
  for (int trial = 0; trial < 200; ++trial) {
    Pose p;
    double z = 2 * uniform01(rng) - 1;
    double az = 2 * kPi * uniform01(rng);
    double r = std::sqrt(1 - z * z);
    p.direction = {r * std::cos(az), r * std::sin(az), z};
    p.inplane_angle = 2 * kPi * uniform01(rng);
    Mat3 rot = pose_to_rotation(p);

    // R^T maps the beam axis to the viewing direction.
    Vec3 back = rot.tmul({0, 0, 1});
    CHECK((back - p.direction).norm() < 1e-10);

    Pose q = rotation_to_pose(rot);
    CHECK((q.direction - p.direction).norm() < 1e-10);
    CHECK(std::abs(std::remainder(q.inplane_angle - p.inplane_angle, 2 * kPi)) < 1e-10);
  }

  // poles
  for (double zdir : {1.0, -1.0}) {
    Pose p;
    p.direction = {0, 0, zdir};
    p.inplane_angle = 1.25;
    Mat3 rot = pose_to_rotation(p);
    Pose q = rotation_to_pose(rot);
    CHECK((q.direction - p.direction).norm() < 1e-10);
    CHECK(std::abs(std::remainder(q.inplane_angle - p.inplane_angle, 2 * kPi)) < 1e-10);
  }
}

TEST_CASE("rotation matrices are orthonormal with det +1") {
  auto rng = make_rng(32, "pose-orthonormal");
  for (int trial = 0; trial < 50; ++trial) {
    Pose p;
    double z = 2 * uniform01(rng) - 1;
    double az = 2 * kPi * uniform01(rng);
    double r = std::sqrt(1 - z * z);
    p.direction = {r * std::cos(az), r * std::sin(az), z};
    p.inplane_angle = 2 * kPi * uniform01(rng);
    Mat3 m = pose_to_rotation(p);
    Mat3 mtm = m.transposed() * m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(std::abs(mtm.at(i, j) - (i == j ? 1.0 : 0.0)) < 1e-12);
    double det = m.at(0, 0) * (m.at(1, 1) * m.at(2, 2) - m.at(1, 2) * m.at(2, 1)) -
                 m.at(0, 1) * (m.at(1, 0) * m.at(2, 2) - m.at(1, 2) * m.at(2, 0)) +
                 m.at(0, 2) * (m.at(1, 0) * m.at(2, 1) - m.at(1, 1) * m.at(2, 0));
    CHECK(det == doctest::Approx(1.0).epsilon(1e-12));
  }
}
