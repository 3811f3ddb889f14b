#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace cryoforge {

struct Minibatch {
  std::vector<int> indices;
};

// Balanced deterministic partition: batch sizes differ by at most one.
std::vector<Minibatch> partition_minibatches(int image_count, int batch_size, uint64_t seed);

// Step-size schedule max(1/16, 2^(1 - floor(tau/150))).
double epsilon_schedule(long tau);

struct SagdOptions {
  int line_search_every = 20;
  double l_decay_per_iteration = 0;  // 0 = default 2^(-1/150)
  int resync_every = 100;
  int max_doublings = 60;
  bool nonneg = true;
};

// Average-gradient state over flattened iterates. Batch order is derived
// from (order_seed, epoch), so a resumed run replays the same sequence.
struct SagdState {
  std::vector<double> v;
  std::vector<std::vector<double>> grad_memory;  // most recent gradient per batch
  std::vector<double> running_sum;               // sum of grad_memory
  double lipschitz = 1.0;
  long tau = 0;
  bool force_line_search = true;  // next step runs a search regardless of cadence
  uint64_t order_seed = 0;
  double last_sync_drift = 0;  // relative drift found at the last re-sync
};

SagdState make_sagd_state(std::vector<double> v0, int batch_count, uint64_t order_seed,
                          double initial_l = 1.0);

// Batch visited at state.tau: a per-epoch seeded permutation, so every
// gradient slot refreshes exactly once per epoch.
int sagd_batch_for(const SagdState& state, int batch_count);

// Doubles L until f(v) - f(v - dv/L) < ||dv||^2 / (2L); starting L kept when
// it already satisfies the condition.
double lipschitz_line_search(double current_l, const std::vector<double>& v,
                             const std::vector<double>& dv, double f_at_v,
                             const std::function<double(const std::vector<double>&)>& objective,
                             int max_doublings = 60);

// One SAGD iteration for batch k: refresh the gradient memory and running
// sum, maintain L (search on cadence, decay otherwise), take the averaged
// step with the fresh prior gradient, then truncate negatives.
// `objective_probe` evaluates batch k's objective at an arbitrary iterate and
// is only called when a line search runs; `prior_grad` may be null.
void sagd_step(SagdState& state, int k, const std::vector<double>& batch_grad,
               double batch_objective,
               const std::function<double(const std::vector<double>&)>& objective_probe,
               const std::vector<double>* prior_grad, const SagdOptions& opts = {});

// Recomputes the running sum from the memories; returns the relative drift
// that had accumulated.
double sagd_resync(SagdState& state);

// Resolution staircase: doubles rho (capped) whenever the held-out error
// plateaus, i.e. improves by less than 0.5% over a 100-iteration window.
class RhoSchedule {
 public:
  enum class Event { none, raised, saturated };

  RhoSchedule(double rho_min, double rho_max, double plateau_rel = 0.005, long window = 100);

  double current() const { return rho_; }
  Event observe(double held_out_error, long tau);

  // Checkpointable view of the mutable pieces (current rho and the observation
  // history the plateau test scans). Construction parameters are not included;
  // restore() onto a schedule built with the same parameters.
  struct Snapshot {
    double rho = 0;
    std::vector<std::pair<long, double>> history;
  };
  Snapshot snapshot() const { return {rho_, history_}; }
  void restore(const Snapshot& s);

 private:
  double rho_;
  double rho_max_;
  double plateau_rel_;
  long window_;
  std::vector<std::pair<long, double>> history_;
};

}  // namespace cryoforge
