#include "core/quadrature.hpp"

#include <algorithm>
#include <cmath>

namespace cryoforge {

std::vector<Vec3> fibonacci_sphere(int m) {
  std::vector<Vec3> pts(m);
  double golden_angle = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < m; ++i) {
    double z = 1.0 - (2.0 * i + 1.0) / m;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double a = golden_angle * i;
    pts[i] = {r * std::cos(a), r * std::sin(a), z};
  }
  return pts;
}

double min_pairwise_angle(const std::vector<Vec3>& pts) {
  double max_cos = -1.0;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j)
      max_cos = std::max(max_cos, pts[i].dot(pts[j]));
  return std::acos(std::clamp(max_cos, -1.0, 1.0));
}

namespace {
// Fibonacci lattice min nearest-neighbor angle is ~ kFibSpacing / sqrt(m);
// the constant is calibrated so the verification loop below almost never runs.
constexpr double kFibSpacing = 3.1;
}  // namespace

DirectionSet build_directions(double target_spacing) {
  double s = std::min(target_spacing, kPi / 4.0);  // lowest supported resolution
  int m = std::max(6, int(std::ceil(kFibSpacing * kFibSpacing / (s * s))));
  DirectionSet set;
  set.points = fibonacci_sphere(m);
  set.angular_spacing = min_pairwise_angle(set.points);
  while (set.angular_spacing > s) {
    m = int(std::ceil(m * 1.1)) + 1;
    set.points = fibonacci_sphere(m);
    set.angular_spacing = min_pairwise_angle(set.points);
  }
  set.weights.assign(set.points.size(), 1.0 / set.points.size());
  return set;
}

InplaneSet build_inplane(double target_spacing) {
  double s = std::min(target_spacing, kPi / 4.0);
  int count = std::max(4, int(std::ceil(2.0 * kPi / s)));
  InplaneSet set;
  set.spacing = 2.0 * kPi / count;
  set.angles.resize(count);
  for (int i = 0; i < count; ++i) set.angles[i] = i * set.spacing;
  set.weights.assign(count, 1.0 / count);
  return set;
}

ShiftSet build_shifts(double rho, double sigma_t, double extent_multiple) {
  ShiftSet set;
  set.sigma = sigma_t;
  if (sigma_t <= 0) {
    set.points = {{0, 0}};
    set.weights = {1.0};
    set.prior_values = {1.0};
    set.spacing = 0;
    return set;
  }
  double spacing = 1.0 / (2.0 * rho);
  double extent = extent_multiple * sigma_t;
  set.spacing = spacing;
  int m = int(std::floor(extent / spacing));
  double r2 = extent * extent * (1 + 1e-12);
  for (int j = -m; j <= m; ++j)
    for (int i = -m; i <= m; ++i) {
      Vec2 t{i * spacing, j * spacing};
      if (t.x * t.x + t.y * t.y <= r2) set.points.push_back(t);
    }
  size_t count = set.points.size();
  set.weights.assign(count, 1.0 / count);
  // prior_values are the Gaussian evaluated at each point, normalized so the
  // quadrature integral sum(w * prior) equals 1 (a proper discrete prior
  // over the truncated lattice).
  set.prior_values.resize(count);
  double z = 0;
  for (size_t i = 0; i < count; ++i) {
    const Vec2& t = set.points[i];
    set.prior_values[i] = std::exp(-(t.x * t.x + t.y * t.y) / (2 * sigma_t * sigma_t));
    z += set.prior_values[i];
  }
  for (auto& p : set.prior_values) p *= count / z;
  return set;
}

QuadratureScheme build_scheme(double rho, int n, double voxel_size, double sigma_t,
                              double extent_multiple) {
  if (rho <= 0) fail_data("rho must be positive");
  if (rho > 0.5 / voxel_size * (1 + 1e-12)) fail_data("rho exceeds Nyquist frequency");
  double target = 1.0 / (rho * n * voxel_size);
  QuadratureScheme s;
  s.rho = rho;
  s.directions = build_directions(target);
  s.inplane = build_inplane(target);
  s.shifts = build_shifts(rho, sigma_t, extent_multiple);
  s.generation = 0;
  return s;
}

namespace {
int nearest_direction(const Vec3& p, const std::vector<Vec3>& pts) {
  int best = 0;
  double best_dot = -2;
  for (size_t i = 0; i < pts.size(); ++i) {
    double d = p.dot(pts[i]);
    if (d > best_dot) {
      best_dot = d;
      best = int(i);
    }
  }
  return best;
}
}  // namespace

SchemeUpgrade upgrade_scheme(const QuadratureScheme& old_scheme, double new_rho, int n,
                             double voxel_size) {
  if (new_rho < old_scheme.rho) fail_data("scheme upgrades must not decrease rho");
  SchemeUpgrade up;
  up.scheme = build_scheme(new_rho, n, voxel_size, old_scheme.shifts.sigma);
  up.scheme.generation = old_scheme.generation + 1;

  up.direction_map.resize(old_scheme.directions.points.size());
  for (size_t i = 0; i < old_scheme.directions.points.size(); ++i)
    up.direction_map[i] =
        nearest_direction(old_scheme.directions.points[i], up.scheme.directions.points);

  up.inplane_map.resize(old_scheme.inplane.angles.size());
  for (size_t i = 0; i < old_scheme.inplane.angles.size(); ++i) {
    double a = old_scheme.inplane.angles[i];
    double best = 1e30;
    int arg = 0;
    for (size_t j = 0; j < up.scheme.inplane.angles.size(); ++j) {
      double d = std::abs(std::remainder(a - up.scheme.inplane.angles[j], 2 * kPi));
      if (d < best) {
        best = d;
        arg = int(j);
      }
    }
    up.inplane_map[i] = arg;
  }

  up.shift_map.resize(old_scheme.shifts.points.size());
  for (size_t i = 0; i < old_scheme.shifts.points.size(); ++i) {
    const Vec2& t = old_scheme.shifts.points[i];
    double best = 1e300;
    int arg = 0;
    for (size_t j = 0; j < up.scheme.shifts.points.size(); ++j) {
      Vec2 d = t - up.scheme.shifts.points[j];
      double d2 = d.x * d.x + d.y * d.y;
      if (d2 < best) {
        best = d2;
        arg = int(j);
      }
    }
    up.shift_map[i] = arg;
  }
  return up;
}

}  // namespace cryoforge
