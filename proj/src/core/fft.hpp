#pragma once

#include "core/grid.hpp"

namespace cryoforge {

/**
 * Unitary centered DFTs. Forward: F(k) = n^{-d/2} sum_x f(x) exp(-2pi i k.(x-c)/n)
 * with c = n/2 on every axis; inverse is the exact adjoint. Round trips are
 * identity to machine precision, and Parseval holds with unit weights.
 * Execution is reentrant: plans are cached per shape behind a mutex and
 * executed with the new-array interface.
 */

FourierVolume fft3(const DensityVolume& v);

/** Inverse transform; returns the real part (imaginary part of the inverse of
 *  a Hermitian spectrum is zero up to rounding). */
DensityVolume ifft3(const FourierVolume& f);

/** Dense centered 2D spectrum of an image (row-major, index k+n/2). */
std::vector<cplx> fft2_dense(const Image& img);

/** Truncate an image spectrum to the disk lattice. */
FourierImage fft2(const Image& img, std::shared_ptr<const DiskLattice> lattice);

/** Expand a disk spectrum (conjugate completion, zero fill) and invert. */
Image ifft2(const FourierImage& f);

}  // namespace cryoforge
