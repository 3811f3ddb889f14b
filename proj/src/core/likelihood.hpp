#pragma once

// Marginalized image likelihood over pose quadratures, in the log domain.
//
// The per-pose log density over the retained disk coefficients is
//   -||S_{-t} I - s*CTF*slice||^2_mult / (2 sigma^2) - (D/2) log(2 pi sigma^2)
// where D = sum of site multiplicities (the real degrees of freedom inside
// the disk) and ||.||_mult weights each stored site by its conjugate-pair
// multiplicity, so the value equals the real-space pixel Gaussian on
// disk-limited data restricted to those D dimensions. The normalization term
// is kept so values stay comparable when the resolution cutoff changes.
//
// The marginal combines a factored quadrature (directions x in-plane angles
// x shifts). Each factor contributes per-node log coefficients
// (log of quadrature weight, plus prior density for shifts, plus importance
// reweighting when subsampled); the marginal is the log-sum-exp over
// evaluated triples of (coefficient sums + per-pose log density). The
// orientation prior over SO(3) is uniform and enters as an additive constant
// only, so it is dropped here.

#include <memory>
#include <vector>

#include "core/grid.hpp"
#include "core/imaging.hpp"
#include "core/quadrature.hpp"

namespace cryoforge {

// Per-image quantities cached for one (scheme, sigma): the disk-truncated
// spectrum, its unshifted copies S_{-t} I for every shift node, and CTF
// values per site.
struct ImageTerms {
  std::shared_ptr<const DiskLattice> lattice;
  std::vector<cplx> data;                    // truncated spectrum, site order
  std::vector<std::vector<cplx>> unshifted;  // [shift][site] = S_{-t} data
  std::vector<double> ctf;                   // per site
  double data_norm2 = 0;                     // mult-weighted
  double sigma = 1.0;
  double log_norm_const = 0;                 // -(D/2) log(2 pi sigma^2)
};

ImageTerms make_image_terms(const Image& img, const CtfParams& ctf,
                            const QuadratureScheme& scheme, double sigma);

// One factor's evaluation set: node indices into the scheme's factor, with
// the log coefficient each node carries in the triple sum. Exhaustive
// evaluation uses log(w) (plus log prior for shifts); importance sampling
// uses log(m * w * prior / (N * q)).
struct FactorSelection {
  std::vector<int> idx;
  std::vector<double> log_c;
};

FactorSelection full_direction_selection(const QuadratureScheme& scheme);
FactorSelection full_inplane_selection(const QuadratureScheme& scheme);
FactorSelection full_shift_selection(const QuadratureScheme& scheme);

struct MarginalResult {
  double log_marginal = 0;
  // Per selected node: log sum over the other factors' evaluated nodes of
  // exp(their coefficients + log density). Not normalized.
  std::vector<double> log_phi_dir;
  std::vector<double> log_phi_inplane;
  std::vector<double> log_phi_shift;
  // Per selected (direction-major, in-plane) pair.
  std::vector<double> log_phi_orient;
  size_t evaluated_poses = 0;  // |dirs| * |inplanes| actually sliced
  // Posterior-mean multiplicity-weighted squared residual over the evaluated
  // triples, sharing their coefficients and densities with log_marginal:
  // sum(c * p * ||resid||^2) / sum(c * p). The basis of the held-out error
  // metric; 0 when no triple has finite density (log_marginal = -inf).
  double expected_resid2 = 0;
};

// Core evaluation shared by the exact and importance-sampled paths. When
// `grad_accum` is non-null it must be an M^3 volume on the prepared lattice;
// the responsibility-weighted residual scatter (s/sigma^2-scaled, CTF-
// modulated, multiplicity-weighted adjoint) of d(-log marginal)/d(volume)
// is accumulated into it, to be mapped to a real-space gradient by
// lift_scatter once per batch.
MarginalResult marginal_over(const ImageTerms& terms, const PreparedVolume& vol,
                             const QuadratureScheme& scheme, const FactorSelection& dirs,
                             const FactorSelection& inplanes, const FactorSelection& shifts,
                             FourierVolume* grad_accum = nullptr);

// Log density of one image under one explicit pose (no marginalization, no
// pose priors).
double per_point_loglik(const FourierImage& img, const CtfParams& theta, const Mat3& rot,
                        const Vec2& shift, const PreparedVolume& vol, double sigma);

// Exhaustive marginal over the whole scheme.
MarginalResult exact_marginal(const Image& img, const CtfParams& theta, const PreparedVolume& vol,
                              const QuadratureScheme& scheme, double sigma);

// Gradient of -log marginal with respect to the real-space density, via the
// scatter + lift path; exact (exhaustive) quadrature.
DensityVolume marginal_gradient(const Image& img, const CtfParams& theta,
                                const PreparedVolume& vol, const QuadratureScheme& scheme,
                                double sigma);

// Map an accumulated gradient scatter back to real space: crop the real part
// of the inverse transform to the source grid and undo the apodization
// division. Linear, so scatters may be summed before lifting.
DensityVolume lift_scatter(const FourierVolume& scatter, const PreparedVolume& vol);

// Standard deviation of pixels outside the centered disk of the given
// radius (the particle-free margin).
double estimate_noise_sigma(const Image& img, double particle_radius_a);

}  // namespace cryoforge
