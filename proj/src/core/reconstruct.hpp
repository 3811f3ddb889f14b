#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "core/grid.hpp"
#include "core/imaging.hpp"
#include "core/importance.hpp"
#include "core/priors.hpp"
#include "core/quadrature.hpp"
#include "core/sagd.hpp"

namespace cryoforge {

/**
 * End-to-end refinement driver: stochastic average gradient over minibatches
 * of the pose-marginalized likelihood, importance-sampled quadrature with
 * per-image persistent evidence, and a resolution staircase driven by the
 * error on a held-out tail of the dataset.
 *
 * All randomness is derived from the single top-level seed through named
 * substreams keyed by (purpose, iteration, image), so runs are reproducible
 * bit for bit and a resumed run replays exactly the numbers the uninterrupted
 * run would have drawn.
 */

struct ReconConfig {
  double rho_min = 0.025;  // starting retained resolution, 1/Angstrom
  double rho_max = 0.1;    // staircase cap, 1/Angstrom
  double sigma_t = 5.0;    // shift prior std, Angstrom; 0 disables the shift search
  int batch_size = 200;
  long max_iterations = 5000;
  int held_out_count = 100;  // trailing images excluded from every gradient
  double s0 = 10.0;          // importance-sampling budget scale
  double sigma = 0;          // pixel noise std; 0 = estimate from corner margins
  double particle_radius_a = 0;  // margin radius for noise estimation; 0 = 0.4 box
  PriorSpec prior;
  bool dataset_psi = false;  // feed the dataset-averaged direction marginal back as proposal prior
  uint64_t seed = 0;
  long eval_every = 25;       // held-out evaluation cadence, iterations
  long checkpoint_every = 0;  // emit a checkpoint every this many iterations; 0 = never
  double plateau_rel = 0.005;
  long plateau_window = 100;

  void check() const;
};

/** One diagnostics row per iteration. NaN marks columns not computed on that
 *  row (epoch boundaries and held-out evaluations have their own cadence). */
struct DiagRow {
  long iteration = 0;  // tau after the step; first row is 1
  double rho = 0;
  int batch = 0;
  double mean_fraction_evaluated = 0;  // of the full pose grid, averaged over the minibatch
  double mean_ess_directions = 0;      // effective sample size of each factor's proposal
  double mean_ess_inplane = 0;
  double mean_ess_shifts = 0;
  double batch_nll = 0;  // minibatch negative log marginal at the pre-step volume
  double lipschitz = 0;
  double epsilon = 0;
  double epoch_kl = std::numeric_limits<double>::quiet_NaN();
  double held_out_rremse = std::numeric_limits<double>::quiet_NaN();
  int rho_event = 0;  // 0 none, 1 resolution raised, 2 saturated (stop)
};

/** Complete mutable optimizer state; everything a checkpoint must carry. */
struct ReconState {
  SagdState sagd;                       // flattened volume iterate + gradient memories
  std::vector<ImportanceState> states;  // per image, training and held-out alike
  RhoSchedule::Snapshot rho;
  uint32_t scheme_generation = 0;
  double sigma = 0;
  std::vector<double> prev_direction_marginal;  // previous epoch's average, for the KL column
  double last_rremse = std::numeric_limits<double>::quiet_NaN();
  // context recorded for validation when resuming
  int n = 0;
  double voxel_size = 0;
  int image_count = 0;
  int batch_count = 0;
  uint64_t seed = 0;
};

struct ReconResult {
  DensityVolume volume;
  std::vector<DiagRow> diagnostics;
  bool saturated = false;  // stopped by the plateau criterion at full resolution
  long iterations = 0;     // tau at exit
  double sigma = 0;        // noise level actually used
  double final_rremse = std::numeric_limits<double>::quiet_NaN();
  ReconState state;  // checkpointable snapshot at exit
};

using CheckpointSink = std::function<void(const ReconState&)>;

/**
 * Runs the refinement from `init` (or from `resume` when given; `init` is
 * ignored then except for validation). The trailing cfg.held_out_count images
 * never contribute to a gradient. If a checkpoint sink is provided it is
 * called on the cadence and, best effort, right before an abort escapes.
 */
ReconResult run_reconstruction(const std::vector<Image>& images,
                               const std::vector<CtfParams>& ctfs, const DensityVolume& init,
                               const ReconConfig& cfg, const ReconState* resume = nullptr,
                               const CheckpointSink& checkpoint_sink = {});

/** Default initialization: a smooth ball of randomly placed spheres (the
 *  simulator's phantom generator with its own substream), scaled to unit mean
 *  density inside the support. */
DensityVolume default_initial_volume(int n, double voxel_size, uint64_t seed);

/** The volume iterate a state carries (e.g. to seed a resumed run's output
 *  before any further iterations happen). */
DensityVolume checkpoint_volume(const ReconState& state);

}  // namespace cryoforge
