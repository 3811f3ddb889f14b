#pragma once

#include <memory>
#include <vector>

#include "core/types.hpp"

namespace cryoforge {

/**
 * Grid conventions used throughout:
 *  - real-space arrays are cubic (or square), x fastest, with the particle
 *    center at index n/2 on each axis; n must be even and >= 8;
 *  - spectra are stored in centered layout: array index i holds integer
 *    frequency k = i - n/2, k in [-n/2, n/2);
 *  - all DFTs are unitary, so Parseval holds with unit weights;
 *  - integer frequency k corresponds to physical frequency k / (n * voxel)
 *    in inverse Angstrom.
 */

/** Real-valued density on an n^3 grid with a physical voxel size in Angstrom. */
struct DensityVolume {
  int n = 0;
  double voxel_size = 1.0;
  std::vector<double> data;

  DensityVolume() = default;
  DensityVolume(int n_, double voxel) : n(n_), voxel_size(voxel), data(size_t(n_) * n_ * n_, 0.0) {
    check_dims(n_);
  }
  static void check_dims(int n);

  size_t idx(int x, int y, int z) const { return (size_t(z) * n + y) * n + x; }
  double& at(int x, int y, int z) { return data[idx(x, y, z)]; }
  double at(int x, int y, int z) const { return data[idx(x, y, z)]; }

  double sum() const;
  double min_value() const;
  double max_value() const;
};

/** Real-valued square image; pixel_size in Angstrom. */
struct Image {
  int n = 0;
  double pixel_size = 1.0;
  std::vector<double> data;

  Image() = default;
  Image(int n_, double pixel) : n(n_), pixel_size(pixel), data(size_t(n_) * n_, 0.0) {}

  size_t idx(int x, int y) const { return size_t(y) * n + x; }
  double& at(int x, int y) { return data[idx(x, y)]; }
  double at(int x, int y) const { return data[idx(x, y)]; }
};

/** Complex spectrum of a real cubic grid, centered layout (see above). */
struct FourierVolume {
  int n = 0;
  double voxel_size = 1.0;
  std::vector<cplx> data;

  FourierVolume() = default;
  FourierVolume(int n_, double voxel) : n(n_), voxel_size(voxel), data(size_t(n_) * n_ * n_) {}

  size_t idx(int kx, int ky, int kz) const {
    return (size_t(kz + n / 2) * n + (ky + n / 2)) * n + (kx + n / 2);
  }
  cplx& at(int kx, int ky, int kz) { return data[idx(kx, ky, kz)]; }
  cplx at(int kx, int ky, int kz) const { return data[idx(kx, ky, kz)]; }

  /** Periodic access: indices outside [-n/2, n/2) wrap (DFT periodicity). */
  cplx at_wrapped(int kx, int ky, int kz) const;

  double freq_step() const { return 1.0 / (n * voxel_size); }
  double nyquist() const { return 0.5 / voxel_size; }

  /** max |F(k) - conj(F(-k))| over the lattice; 0 for spectra of real data. */
  double max_hermitian_asymmetry() const;
};

/**
 * The retained frequency lattice of an image spectrum: all integer sites with
 * |k|/(n*pixel) <= rho, stored once per conjugate pair. Sites with
 * k == -k (mod n) carry mult 1, all others mult 2, so sum(mult) equals the
 * full-plane coefficient count and weighted norms reproduce real-space norms.
 */
struct DiskLattice {
  struct Site {
    int kx = 0, ky = 0;
    double mult = 1.0;
  };

  int n = 0;
  double pixel_size = 1.0;
  double rho = 0.0;  // physical cutoff, 1/Angstrom
  std::vector<Site> sites;

  static std::shared_ptr<const DiskLattice> make(int n, double pixel_size, double rho);

  double freq_step() const { return 1.0 / (n * pixel_size); }
  /** Full-plane coefficient count = sum of mult. */
  double coefficient_count() const;
  /** Physical frequency of a site, 1/Angstrom. */
  Vec2 freq(const Site& s) const {
    double d = freq_step();
    return {s.kx * d, s.ky * d};
  }
};

/** Image spectrum restricted to a DiskLattice; values aligned with sites. */
struct FourierImage {
  std::shared_ptr<const DiskLattice> lattice;
  std::vector<cplx> v;

  FourierImage() = default;
  explicit FourierImage(std::shared_ptr<const DiskLattice> lat)
      : lattice(std::move(lat)), v(lattice->sites.size(), cplx(0, 0)) {}

  /** Weighted squared norm sum(mult * |v|^2) = real-space ||.||^2 share. */
  double norm2() const;
};

}  // namespace cryoforge
