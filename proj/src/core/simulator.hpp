#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "core/grid.hpp"
#include "core/imaging.hpp"
#include "core/pose.hpp"

namespace cryoforge {

struct SimConfig {
  int image_count = 1000;
  double snr = 0.05;    // in-support signal variance over noise variance
  double sigma_t = 5.0;  // shift prior std, Angstrom
  double defocus_min_a = 10000;
  double defocus_max_a = 20000;
  double cs_mm = 2.0;
  double voltage_kv = 300;
  double amplitude_contrast = 0.1;
  double envelope_b_factor = 0;
  uint64_t seed = 0;

  void check() const;
};

struct QuaternionSample {
  double w = 1, x = 0, y = 0, z = 0;
};

QuaternionSample uniform_quaternion(std::mt19937_64& rng);
Mat3 quaternion_to_rotation(const QuaternionSample& q);
Pose uniform_so3_sample(std::mt19937_64& rng);

// Ground-truth latent variables, recorded for diagnostics only; the
// reconstruction path never sees them.
struct TrueLatents {
  QuaternionSample quaternion;
  Pose pose;  // rotation factored into (direction, in-plane), plus the shift
  double defocus_a = 0;
};

struct SimulatedDataset {
  std::vector<Image> images;
  std::vector<CtfParams> ctfs;
  std::vector<TrueLatents> truth;
  double noise_sigma = 0;   // pixel noise std actually applied
  double signal_scale = 0;  // mean in-support signal std (prior calibration)
  SimConfig config;
};

struct SphereParam {
  Vec3 center;  // Angstrom, relative to the volume center
  double radius = 0;
};

// Sum of uniform-density balls with random centers inside a central support
// sphere and random radii; density adds where balls overlap, so the total
// mass is the sum of the analytic ball volumes (up to the one-voxel edge
// ramp). `spheres_out`, when given, receives the generated parameters.
DensityVolume phantom_spheres(int n, double voxel_size, int sphere_count, uint64_t seed,
                              std::vector<SphereParam>* spheres_out = nullptr);

// Deterministic asymmetric multi-lobe phantom (no rotational symmetry), for
// pose-identifiability tests; `kind` selects among fixed lobe layouts.
DensityVolume phantom_geometric(int n, double voxel_size, int kind, uint64_t seed);

// Renders image_count projections of v_true at poses drawn uniformly on
// SO(3), Gaussian shifts, uniform defocus, plus IID pixel noise scaled to the
// configured SNR. snr = infinity disables noise.
SimulatedDataset simulate_dataset(const DensityVolume& v_true, const SimConfig& cfg);

}  // namespace cryoforge
