#include "core/grid.hpp"

#include <algorithm>
#include <cmath>

namespace cryoforge {

void DensityVolume::check_dims(int n) {
  if (n < 8 || n % 2 != 0) fail_data("grid side must be even and >= 8, got " + std::to_string(n));
}

double DensityVolume::sum() const {
  double s = 0;
  for (double v : data) s += v;
  return s;
}

double DensityVolume::min_value() const {
  return data.empty() ? 0.0 : *std::min_element(data.begin(), data.end());
}

double DensityVolume::max_value() const {
  return data.empty() ? 0.0 : *std::max_element(data.begin(), data.end());
}

namespace {
inline int wrap_centered(int k, int n) {
  // Map any integer frequency onto [-n/2, n/2).
  int m = (k + n / 2) % n;
  if (m < 0) m += n;
  return m - n / 2;
}
}  // namespace

cplx FourierVolume::at_wrapped(int kx, int ky, int kz) const {
  return at(wrap_centered(kx, n), wrap_centered(ky, n), wrap_centered(kz, n));
}

double FourierVolume::max_hermitian_asymmetry() const {
  double worst = 0;
  int h = n / 2;
  for (int kz = -h; kz < h; ++kz)
    for (int ky = -h; ky < h; ++ky)
      for (int kx = -h; kx < h; ++kx) {
        cplx a = at(kx, ky, kz);
        cplx b = at_wrapped(-kx, -ky, -kz);
        worst = std::max(worst, std::abs(a - std::conj(b)));
      }
  return worst;
}

std::shared_ptr<const DiskLattice> DiskLattice::make(int n, double pixel_size, double rho) {
  if (n < 8 || n % 2 != 0) fail_data("image side must be even and >= 8, got " + std::to_string(n));
  double nyq = 0.5 / pixel_size;
  if (rho <= 0) fail_data("rho must be positive");
  if (rho > nyq * (1 + 1e-12)) fail_data("rho exceeds Nyquist frequency");

  auto lat = std::make_shared<DiskLattice>();
  lat->n = n;
  lat->pixel_size = pixel_size;
  lat->rho = rho;

  int h = n / 2;
  double r_cells = rho * n * pixel_size;  // cutoff radius in lattice cells
  double r2 = r_cells * r_cells * (1 + 1e-12);
  auto self_conjugate = [&](int k) { return k == 0 || k == -h; };
  // Unique representatives under k ~ -k (mod n): keep the upper half plane,
  // and on self-paired rows (ky = 0 and ky = -n/2) keep kx >= 0 plus the
  // self-conjugate kx = -n/2 site.
  for (int ky = -h; ky < h; ++ky) {
    bool self_row = self_conjugate(ky);
    for (int kx = -h; kx < h; ++kx) {
      if (double(kx) * kx + double(ky) * ky > r2) continue;
      if (ky < 0 && !self_row) continue;
      if (self_row && kx < 0 && kx != -h) continue;
      double mult = (self_row && self_conjugate(kx)) ? 1.0 : 2.0;
      lat->sites.push_back({kx, ky, mult});
    }
  }
  return lat;
}

double DiskLattice::coefficient_count() const {
  double c = 0;
  for (const auto& s : sites) c += s.mult;
  return c;
}

double FourierImage::norm2() const {
  double s = 0;
  for (size_t i = 0; i < v.size(); ++i) s += lattice->sites[i].mult * std::norm(v[i]);
  return s;
}

}  // namespace cryoforge
