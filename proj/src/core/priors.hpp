#pragma once

#include "core/grid.hpp"

namespace cryoforge {

enum class PriorKind { Uniform, Exponential, Car };

struct PriorSpec {
  PriorKind kind = PriorKind::Uniform;
  double lambda = 1.0;     // exponential rate, inverse density units
  double sigma_car = 1.0;  // smoothness scale, density units

  void check() const;
};

// Negative log prior density, up to an additive constant that does not
// depend on the volume. Exponential requires a nonnegative volume; the
// optimizer maintains that through its truncation step.
double neg_log_prior(const DensityVolume& v, const PriorSpec& spec);

// Elementwise derivative of neg_log_prior with respect to the voxels.
DensityVolume neg_log_prior_grad(const DensityVolume& v, const PriorSpec& spec);

// Rate such that the prior's mean density equals `fraction` of the given
// signal scale.
double calibrate_exponential_lambda(double signal_scale, double fraction = 0.01);

}  // namespace cryoforge
