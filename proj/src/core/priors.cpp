#include "core/priors.hpp"

#include <cmath>

#include "core/types.hpp"

namespace cryoforge {

void PriorSpec::check() const {
  if (kind == PriorKind::Exponential && !(lambda > 0))
    fail_usage("exponential prior rate must be positive, got " + std::to_string(lambda));
  if (kind == PriorKind::Car && !(sigma_car > 0))
    fail_usage("CAR prior scale must be positive, got " + std::to_string(sigma_car));
}

namespace {

// Mean of the 26 immediate neighbors of every voxel, with periodic wrap.
DensityVolume neighbor_mean(const DensityVolume& v) {
  int n = v.n;
  DensityVolume out(n, v.voxel_size);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        double sum = 0;
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              if (dx == 0 && dy == 0 && dz == 0) continue;
              int xx = (x + dx + n) % n;
              int yy = (y + dy + n) % n;
              int zz = (z + dz + n) % n;
              sum += v.at(xx, yy, zz);
            }
        out.at(x, y, z) = sum / 26.0;
      }
  return out;
}

void require_nonnegative(const DensityVolume& v) {
  for (double x : v.data)
    if (x < 0)
      fail_usage("exponential prior evaluated on a volume with negative density " +
                       std::to_string(x));
}

}  // namespace

double neg_log_prior(const DensityVolume& v, const PriorSpec& spec) {
  spec.check();
  switch (spec.kind) {
    case PriorKind::Uniform:
      return 0.0;
    case PriorKind::Exponential: {
      require_nonnegative(v);
      double sum = 0;
      for (double x : v.data) sum += x;
      double count = double(v.data.size());
      return spec.lambda * sum - count * std::log(spec.lambda);
    }
    case PriorKind::Car: {
      DensityVolume m = neighbor_mean(v);
      double acc = 0;
      for (size_t i = 0; i < v.data.size(); ++i) {
        double r = v.data[i] - m.data[i];
        acc += r * r;
      }
      return acc / (2 * spec.sigma_car * spec.sigma_car);
    }
  }
  fail_usage("unknown prior kind");
}

DensityVolume neg_log_prior_grad(const DensityVolume& v, const PriorSpec& spec) {
  spec.check();
  DensityVolume g(v.n, v.voxel_size);
  switch (spec.kind) {
    case PriorKind::Uniform:
      return g;
    case PriorKind::Exponential: {
      require_nonnegative(v);
      for (auto& x : g.data) x = spec.lambda;
      return g;
    }
    case PriorKind::Car: {
      // f = ||(I - A)v||^2 / (2 sigma^2) with A the symmetric neighbor-mean
      // operator, so grad = (I - A)(I - A)v / sigma^2.
      DensityVolume r = v;
      DensityVolume m = neighbor_mean(v);
      for (size_t i = 0; i < r.data.size(); ++i) r.data[i] -= m.data[i];
      DensityVolume mr = neighbor_mean(r);
      double inv_s2 = 1.0 / (spec.sigma_car * spec.sigma_car);
      for (size_t i = 0; i < g.data.size(); ++i)
        g.data[i] = (r.data[i] - mr.data[i]) * inv_s2;
      return g;
    }
  }
  fail_usage("unknown prior kind");
}

double calibrate_exponential_lambda(double signal_scale, double fraction) {
  if (!(signal_scale > 0))
    fail_usage("signal scale for prior calibration must be positive, got " +
                     std::to_string(signal_scale));
  if (!(fraction > 0))
    fail_usage("prior calibration fraction must be positive, got " +
                     std::to_string(fraction));
  return 1.0 / (fraction * signal_scale);
}

}  // namespace cryoforge
