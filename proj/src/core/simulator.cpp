#include "core/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "core/fft.hpp"
#include "core/rng.hpp"
#include "core/threading.hpp"
#include "core/types.hpp"

namespace cryoforge {

void SimConfig::check() const {
  if (image_count < 1) fail_usage("simulated dataset needs at least one image");
  if (!(snr > 0)) fail_usage("signal-to-noise ratio must be positive");
  if (!(sigma_t >= 0)) fail_usage("shift std must be nonnegative");
  if (!(defocus_min_a >0) || defocus_max_a < defocus_min_a)
    fail_usage("defocus range must satisfy 0 < min <= max");
}

QuaternionSample uniform_quaternion(std::mt19937_64& rng) {
  // Shoemake's subgroup construction: exact Haar measure from three uniforms
  double u1 = uniform01(rng), u2 = uniform01(rng), u3 = uniform01(rng);
  double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  QuaternionSample q;
  q.x = a * std::sin(2 * kPi * u2);
  q.y = a * std::cos(2 * kPi * u2);
  q.z = b * std::sin(2 * kPi * u3);
  q.w = b * std::cos(2 * kPi * u3);
  return q;
}

Mat3 quaternion_to_rotation(const QuaternionSample& q) {
  double w = q.w, x = q.x, y = q.y, z = q.z;
  return Mat3{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
               2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
               2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

Pose uniform_so3_sample(std::mt19937_64& rng) {
  return rotation_to_pose(quaternion_to_rotation(uniform_quaternion(rng)));
}

DensityVolume phantom_spheres(int n, double voxel_size, int sphere_count, uint64_t seed,
                              std::vector<SphereParam>* spheres_out) {
  if (sphere_count < 1) fail_usage("sphere phantom needs at least one sphere");
  DensityVolume v(n, voxel_size);
  double box = n * voxel_size;
  double support = 0.30 * box;  // centers stay well inside the box
  double r_min = 0.05 * box, r_max = 0.11 * box;
  auto rng = make_rng(seed, "phantom-spheres");

  std::vector<SphereParam> spheres;
  for (int s = 0; s < sphere_count; ++s) {
    SphereParam sp;
    do {
      sp.center = {(2 * uniform01(rng) - 1) * support, (2 * uniform01(rng) - 1) * support,
                   (2 * uniform01(rng) - 1) * support};
    } while (sp.center.norm() > support);
    sp.radius = r_min + (r_max - r_min) * uniform01(rng);
    spheres.push_back(sp);
  }

  double c0 = n / 2.0;
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        double px = (x - c0) * voxel_size, py = (y - c0) * voxel_size, pz = (z - c0) * voxel_size;
        double val = 0;
        for (const auto& sp : spheres) {
          double dx = px - sp.center.x, dy = py - sp.center.y, dz = pz - sp.center.z;
          double d = std::sqrt(dx * dx + dy * dy + dz * dz);
          // one-voxel linear edge: keeps the integrated mass at the analytic
          // ball volume up to O((voxel/r)^2)
          double t = 0.5 + (sp.radius - d) / voxel_size;
          val += std::clamp(t, 0.0, 1.0);
        }
        v.at(x, y, z) = val;
      }
  if (spheres_out) *spheres_out = std::move(spheres);
  return v;
}

DensityVolume phantom_geometric(int n, double voxel_size, int kind, uint64_t seed) {
  DensityVolume v(n, voxel_size);

  struct Lobe {
    Vec3 center;  // fractions of the box
    double sigma;  // fraction of the box
    double amp;
  };
  // Asymmetric layouts: no nontrivial rotation maps a layout onto itself,
  // and the off-center lobes carry more energy than the central one, so
  // rotated copies decorrelate strongly.
  std::vector<Lobe> lobes;
  switch (((kind % 3) + 3) % 3) {
    case 0:
      lobes = {{{0.00, 0.00, 0.00}, 0.075, 0.9},
               {{0.16, 0.03, -0.02}, 0.060, 0.9},
               {{-0.07, 0.14, 0.05}, 0.055, 0.8},
               {{0.02, -0.06, 0.15}, 0.050, 0.9},
               {{-0.11, -0.09, -0.07}, 0.045, 0.7}};
      break;
    case 1:
      lobes = {{{0.00, 0.00, 0.00}, 0.085, 0.9},
               {{0.18, 0.00, 0.04}, 0.065, 1.0},
               {{0.06, 0.16, -0.03}, 0.055, 0.9},
               {{-0.13, 0.05, 0.11}, 0.060, 0.8}};
      break;
    default:
      lobes = {{{0.02, -0.01, 0.00}, 0.075, 0.9},
               {{-0.15, 0.08, 0.02}, 0.065, 0.8},
               {{0.10, 0.12, 0.09}, 0.055, 0.9},
               {{0.05, -0.14, -0.08}, 0.055, 0.7},
               {{-0.04, 0.02, 0.17}, 0.050, 0.8},
               {{0.14, -0.05, 0.12}, 0.045, 0.6}};
  }

  // small deterministic jitter keeps distinct seeds distinct without
  // destroying the asymmetry
  auto rng = make_rng(seed, "phantom-geometric", uint64_t(kind));
  for (auto& l : lobes) {
    l.center.x += 0.01 * (2 * uniform01(rng) - 1);
    l.center.y += 0.01 * (2 * uniform01(rng) - 1);
    l.center.z += 0.01 * (2 * uniform01(rng) - 1);
  }

  double c0 = n / 2.0;
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        double px = (x - c0) / double(n), py = (y - c0) / double(n), pz = (z - c0) / double(n);
        double val = 0;
        for (const auto& l : lobes) {
          double dx = px - l.center.x, dy = py - l.center.y, dz = pz - l.center.z;
          double d2 = dx * dx + dy * dy + dz * dz;
          val += l.amp * std::exp(-d2 / (2 * l.sigma * l.sigma));
        }
        v.at(x, y, z) = val;
      }
  return v;
}

namespace {

// Per-image mask of meaningful signal: pixels above 1e-3 of the image's peak
// magnitude. Returns the variance over that mask.
double in_support_variance(const Image& img) {
  double peak = 0;
  for (double p : img.data) peak = std::max(peak, std::abs(p));
  if (peak <= 0) fail_data("simulated projection carries no signal");
  double thresh = 1e-3 * peak;
  double sum = 0, sum2 = 0;
  long count = 0;
  for (double p : img.data)
    if (std::abs(p) > thresh) {
      sum += p;
      sum2 += p * p;
      ++count;
    }
  if (count < 2) fail_data("simulated projection support is degenerate");
  double mean = sum / double(count);
  return std::max(0.0, sum2 / double(count) - mean * mean);
}

}  // namespace

SimulatedDataset simulate_dataset(const DensityVolume& v_true, const SimConfig& cfg) {
  cfg.check();
  SimulatedDataset ds;
  ds.config = cfg;
  int n = v_true.n;
  double voxel = v_true.voxel_size;
  auto lattice = DiskLattice::make(n, voxel, 0.5 / voxel);
  PreparedVolume pv = prepare_projection_volume(v_true);

  ds.images.resize(size_t(cfg.image_count), Image(n, voxel));
  ds.ctfs.resize(size_t(cfg.image_count));
  ds.truth.resize(size_t(cfg.image_count));

  parallel_for(size_t(cfg.image_count), [&](size_t i) {
    auto pose_rng = make_rng(cfg.seed, "sim-pose", uint64_t(i));
    QuaternionSample q = uniform_quaternion(pose_rng);
    Mat3 rot = quaternion_to_rotation(q);

    auto shift_rng = make_rng(cfg.seed, "sim-shift", uint64_t(i));
    NormalSampler gauss;
    Vec2 shift{cfg.sigma_t * gauss(shift_rng), cfg.sigma_t * gauss(shift_rng)};

    auto ctf_rng = make_rng(cfg.seed, "sim-defocus", uint64_t(i));
    CtfParams theta;
    theta.defocus_a = cfg.defocus_min_a + (cfg.defocus_max_a - cfg.defocus_min_a) *
                                              uniform01(ctf_rng);
    theta.spherical_aberration_mm = cfg.cs_mm;
    theta.voltage_kv = cfg.voltage_kv;
    theta.amplitude_contrast = cfg.amplitude_contrast;
    theta.envelope_b_factor = cfg.envelope_b_factor;

    FourierImage spec = forward_model(pv, rot, shift, theta, lattice);
    ds.images[size_t(i)] = ifft2(spec);
    ds.images[size_t(i)].pixel_size = voxel;

    TrueLatents& t = ds.truth[size_t(i)];
    t.quaternion = q;
    t.pose = rotation_to_pose(rot);
    t.pose.shift = shift;
    t.defocus_a = theta.defocus_a;
    ds.ctfs[size_t(i)] = theta;
  });

  // noise level from the dataset-mean in-support signal power
  double mean_power = 0;
  for (const auto& img : ds.images) mean_power += in_support_variance(img);
  mean_power /= double(cfg.image_count);
  ds.signal_scale = std::sqrt(mean_power);

  if (std::isfinite(cfg.snr)) {
    ds.noise_sigma = std::sqrt(mean_power / cfg.snr);
    parallel_for(size_t(cfg.image_count), [&](size_t i) {
      auto noise_rng = make_rng(cfg.seed, "sim-noise", uint64_t(i));
      NormalSampler gauss;
      for (auto& p : ds.images[i].data) p += ds.noise_sigma * gauss(noise_rng);
    });
  }
  return ds;
}

}  // namespace cryoforge
