#pragma once

// Held-out model assessment. The central quantity is the posterior-expected
// squared reconstruction error of one image, E^2 = sum(c p ||resid||^2) /
// sum(c p) over evaluated pose triples — computed inside the same pass that
// produces the marginal likelihood, so subsampled evaluations reuse the
// stored importance evidence. The dataset metric normalizes by the noise
// level and the retained coefficient count, so residuals that look exactly
// like the assumed noise score 1.
//
// Also here: the dataset-averaged direction proposal (which regions of the
// view sphere the sampler still considers) and the epoch-to-epoch KL
// diagnostic of proposal drift.

#include <random>
#include <vector>

#include "core/grid.hpp"
#include "core/imaging.hpp"
#include "core/importance.hpp"
#include "core/likelihood.hpp"
#include "core/quadrature.hpp"

namespace cryoforge {

struct EvalOptions {
  // Schemes with at most this many pose triples are always summed
  // exhaustively (zero estimator variance); larger ones reuse stored
  // importance evidence with the budget scale below.
  size_t exhaustive_threshold = 100000;
  double s0 = 100.0;
  // Iteration stamp written into fresh evidence by one-shot evaluations;
  // chooses the annealing point of the report's direction marginal.
  long stamp_tau = 250;
  uint64_t seed = 0;

  void check() const;
};

struct ImageEval {
  double emse = 0;  // expected squared residual, coefficient-sum units
  double log_marginal = 0;
  double fraction_evaluated = 1.0;
  bool flagged = false;  // no pose reached finite density; emse is meaningless
};

// Expected squared error of one image. `state` carries evidence between
// repeated evaluations (the reconstruction loop evaluates held-out images
// every epoch); a fresh state makes the first visit exhaustive. `tau` stamps
// the stored evidence. Flagged results leave the state untouched.
ImageEval expected_mse(const ImageTerms& terms, const PreparedVolume& vol,
                       const QuadratureScheme& scheme, ImportanceState& state, long tau,
                       std::mt19937_64& rng, const EvalOptions& opts = {});

struct EvalReport {
  double rremse = 0;
  double rho = 0;    // resolution cutoff the metrics were computed at
  double sigma = 0;  // noise level used for normalization
  size_t flagged_count = 0;
  double mean_fraction_evaluated = 1.0;
  std::vector<ImageEval> per_image;
  // Dataset-mean direction proposal over scheme.directions; sums to 1.
  std::vector<double> direction_marginal;
  // Per-epoch proposal drift, filled by the reconstruction loop.
  std::vector<double> epoch_kl;
};

// Full-dataset metric: rremse = sqrt(mean_i(emse_i / D_i) / sigma^2) with
// D_i the coefficient count of image i's evaluation disk. Flagged images are
// excluded from the mean (and counted); all images flagged is a numeric
// failure.
EvalReport evaluate_dataset(const std::vector<Image>& images, const std::vector<CtfParams>& ctfs,
                            const DensityVolume& volume, const QuadratureScheme& scheme,
                            double sigma, const EvalOptions& opts = {});

// Mean over images of the direction proposal each stored state induces (at
// its own recorded iteration); a distribution over scheme.directions.
std::vector<double> direction_marginal_average(const std::vector<ImportanceState>& states,
                                               const QuadratureScheme& scheme, double s0 = 10.0);

// KL(curr || prev) of two distributions on the same support; prev must be
// strictly positive wherever curr is (proposal floors guarantee this).
double epoch_kl(const std::vector<double>& prev, const std::vector<double>& curr);

}  // namespace cryoforge
