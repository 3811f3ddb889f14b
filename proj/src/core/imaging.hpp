#pragma once

// Linear forward operators of the image formation model: Fourier-slice
// projection, phase shifts, CTF modulation, their composition, and the
// adjoint of slicing.
//
// Projection pipeline
// -------------------
//   prepare_projection_volume: real-space density -> padded, deapodized
//     Fourier spectrum. The density is divided voxel-wise by the interpolation
//     kernel's transform (apodization) profile, zero-padded by an integer
//     factor (default 2), and transformed with the unitary centered DFT.
//   extract_slice: pure windowed-sinc interpolation of a central plane of a
//     FourierVolume onto an image disk lattice. No scaling, no apodization
//     correction — at exact lattice points with the identity rotation it
//     reproduces the stored coefficients.
//   forward_model: CTF * shift * scale * slice of a prepared volume. The
//     physical scale voxel·M^{3/2}/N converts interpolated padded-volume
//     coefficients into the unitary DFT of the projected image in
//     density·Å units per pixel.
//
// Frequency mapping: an image lattice site (kx, ky) of an N-pixel image at
// pixel size p has physical frequency (kx, ky)/(N·p). On an M-voxel volume
// with the same spacing the matching lattice coordinate is (kx, ky)·M/N, so
// slices sample the volume at u = Rᵀ·(kx·M/N, ky·M/N, 0), where R maps
// volume coordinates into camera coordinates (beam along +z).

#include <memory>

#include "core/grid.hpp"
#include "core/types.hpp"

namespace cryoforge {

// Separable interpolation kernel: sinc windowed by a Kaiser-Bessel taper,
// supported on |t| <= footprint/2 lattice units. Interpolating (value 1 at
// 0, 0 at other integers), so on-lattice reads are exact.
struct InterpKernel {
  int footprint = 4;  // lattice points per axis; even, >= 2
  double beta = 4.0;  // taper sharpness, tuned against a real-space projection oracle

  void check() const;
  double operator()(double t) const;
  // Continuous Fourier transform of the 1D kernel, evaluated numerically.
  // Real and even in xi (cycles per lattice unit).
  double transform(double xi) const;
};

// A density volume made ready for slicing: deapodized, zero-padded,
// transformed. `scale` maps interpolated coefficients of `spectrum` to
// unitary-DFT coefficients of the physical projection image.
struct PreparedVolume {
  FourierVolume spectrum;
  int source_n = 0;
  InterpKernel kernel;
  double scale = 0.0;
  // 1 / kappa((x - N/2) / M) over the occupied window; shared by the forward
  // preparation and the adjoint (gradient) path.
  std::vector<double> inv_apod;
};

PreparedVolume prepare_projection_volume(const DensityVolume& vol,
                                         const InterpKernel& kernel = {},
                                         int pad_factor = 2);

// Central-plane extraction by windowed-sinc interpolation. The lattice's
// pixel size must equal the volume's voxel size; lattice frequencies are
// scaled by vol.n / lattice->n to land on the volume grid. Access wraps
// periodically (exact for DFT spectra).
FourierImage extract_slice(const FourierVolume& vol, const Mat3& rot,
                           const std::shared_ptr<const DiskLattice>& lattice,
                           const InterpKernel& kernel = {});

// Convenience: build the disk lattice at the volume's own geometry.
FourierImage extract_slice(const FourierVolume& vol, const Mat3& rot, double rho,
                           const InterpKernel& kernel = {});

// Exact transpose of extract_slice with respect to the
// multiplicity-weighted image inner product <a,b> = sum mult·a·conj(b) and
// the plain volume inner product: scatters mult·value·kernel weights into
// `accum` over the same footprints extract_slice gathers from.
void adjoint_slice(const FourierImage& img, const Mat3& rot, FourierVolume& accum,
                   const InterpKernel& kernel = {});

// Phase-only translation: coefficient at physical frequency f is multiplied
// by exp(-2*pi*i f·t), t in Angstroms.
FourierImage apply_shift(const FourierImage& img, const Vec2& t);

// Contrast transfer function parameters. `identity` is a test hook that
// short-circuits evaluation to 1 everywhere.
struct CtfParams {
  double defocus_a = 15000.0;
  double spherical_aberration_mm = 2.0;
  double voltage_kv = 300.0;
  double amplitude_contrast = 0.1;
  double envelope_b_factor = 0.0;  // Angstrom^2; 0 disables the envelope
  bool identity = false;

  void check() const;
};

// Relativistic electron wavelength in Angstroms at the given accelerating
// voltage in kV.
double electron_wavelength_a(double voltage_kv);

// Scalar CTF at frequency magnitude f (1/Angstrom):
//   -sqrt(1-w^2)·sin(gamma) - w·cos(gamma),  gamma = pi·lambda·dz·f^2 -
//   (pi/2)·Cs·lambda^3·f^4, times exp(-B·f^2/4) when B > 0.
double ctf_eval(const CtfParams& theta, double f);

FourierImage apply_ctf(const FourierImage& img, const CtfParams& theta);

// scale · CTF · shift · slice: the noise-free model image for one pose in
// unitary-DFT coefficients over the lattice disk.
FourierImage forward_model(const PreparedVolume& pv, const Mat3& rot, const Vec2& t,
                           const CtfParams& theta,
                           const std::shared_ptr<const DiskLattice>& lattice);

}  // namespace cryoforge
