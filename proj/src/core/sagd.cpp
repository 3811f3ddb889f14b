#include "core/sagd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/rng.hpp"
#include "core/types.hpp"

namespace cryoforge {

std::vector<Minibatch> partition_minibatches(int image_count, int batch_size, uint64_t seed) {
  if (image_count <= 0) fail_usage("cannot partition an empty dataset into minibatches");
  if (batch_size < 1) fail_usage("minibatch size must be at least 1");
  std::vector<int> order(static_cast<size_t>(image_count));
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, "minibatch-partition");
  std::shuffle(order.begin(), order.end(), rng);

  int batches = (image_count + batch_size - 1) / batch_size;
  int base = image_count / batches;
  int extra = image_count % batches;  // first `extra` batches get one more
  std::vector<Minibatch> out(static_cast<size_t>(batches));
  size_t pos = 0;
  for (int b = 0; b < batches; ++b) {
    int take = base + (b < extra ? 1 : 0);
    out[size_t(b)].indices.assign(order.begin() + long(pos), order.begin() + long(pos) + take);
    pos += size_t(take);
  }
  return out;
}

double epsilon_schedule(long tau) {
  if (tau < 0) fail_usage("negative iteration in step-size schedule");
  return std::max(1.0 / 16.0, std::pow(2.0, 1.0 - double(tau / 150)));
}

SagdState make_sagd_state(std::vector<double> v0, int batch_count, uint64_t order_seed,
                          double initial_l) {
  if (batch_count < 1) fail_usage("optimizer needs at least one minibatch");
  if (!(initial_l > 0)) fail_usage("initial Lipschitz estimate must be positive");
  SagdState s;
  s.running_sum.assign(v0.size(), 0.0);
  s.grad_memory.assign(size_t(batch_count), std::vector<double>(v0.size(), 0.0));
  s.v = std::move(v0);
  s.lipschitz = initial_l;
  s.order_seed = order_seed;
  return s;
}

int sagd_batch_for(const SagdState& state, int batch_count) {
  long epoch = state.tau / batch_count;
  long slot = state.tau % batch_count;
  std::vector<int> order(static_cast<size_t>(batch_count));
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(state.order_seed, "sag-epoch", uint64_t(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order[size_t(slot)];
}

double lipschitz_line_search(double current_l, const std::vector<double>& v,
                             const std::vector<double>& dv, double f_at_v,
                             const std::function<double(const std::vector<double>&)>& objective,
                             int max_doublings) {
  double dv2 = 0;
  for (double x : dv) dv2 += x * x;
  if (dv2 == 0) return current_l;

  double l = current_l;
  for (int attempt = 0; attempt <= max_doublings; ++attempt) {
    std::vector<double> probe(v.size());
    for (size_t i = 0; i < v.size(); ++i) probe[i] = v[i] - dv[i] / l;
    double f_probe = objective(probe);
    // stop once the step achieves the guaranteed decrease; otherwise the
    // curvature estimate is too small and L doubles
    if (f_at_v - f_probe >= dv2 / (2 * l)) return l;
    l *= 2;
  }
  fail_numeric("Lipschitz line search did not terminate after " +
               std::to_string(max_doublings) + " doublings; gradient and objective disagree");
}

void sagd_step(SagdState& state, int k, const std::vector<double>& batch_grad,
               double batch_objective,
               const std::function<double(const std::vector<double>&)>& objective_probe,
               const std::vector<double>* prior_grad, const SagdOptions& opts) {
  size_t dim = state.v.size();
  if (k < 0 || size_t(k) >= state.grad_memory.size()) fail_usage("minibatch index out of range");
  if (batch_grad.size() != dim) fail_usage("batch gradient dimension mismatch");
  if (prior_grad && prior_grad->size() != dim) fail_usage("prior gradient dimension mismatch");
  double finite_check = 0;
  for (double g : batch_grad) finite_check += g;
  if (!std::isfinite(finite_check) || !std::isfinite(batch_objective))
    fail_numeric("non-finite batch gradient or objective at iteration " +
                 std::to_string(state.tau));

  // refresh the average-gradient memory for this batch
  std::vector<double>& mem = state.grad_memory[size_t(k)];
  for (size_t i = 0; i < dim; ++i) {
    state.running_sum[i] += batch_grad[i] - mem[i];
    mem[i] = batch_grad[i];
  }

  bool search = state.force_line_search || (opts.line_search_every > 0 &&
                                            state.tau % opts.line_search_every == 0);
  if (search) {
    state.lipschitz = lipschitz_line_search(state.lipschitz, state.v, batch_grad,
                                            batch_objective, objective_probe,
                                            opts.max_doublings);
    state.force_line_search = false;
  } else {
    double decay = opts.l_decay_per_iteration > 0 ? opts.l_decay_per_iteration
                                                  : std::pow(2.0, -1.0 / 150.0);
    state.lipschitz *= decay;
  }

  double eps = epsilon_schedule(state.tau);
  double scale = eps / (double(state.grad_memory.size()) * state.lipschitz);
  for (size_t i = 0; i < dim; ++i) {
    double dir = state.running_sum[i] + (prior_grad ? (*prior_grad)[i] : 0.0);
    state.v[i] -= scale * dir;
    if (opts.nonneg && state.v[i] < 0) state.v[i] = 0;
  }

  ++state.tau;
  if (opts.resync_every > 0 && state.tau % opts.resync_every == 0) sagd_resync(state);
}

double sagd_resync(SagdState& state) {
  std::vector<double> fresh(state.v.size(), 0.0);
  for (const auto& mem : state.grad_memory)
    for (size_t i = 0; i < fresh.size(); ++i) fresh[i] += mem[i];
  double num = 0, den = 0;
  for (size_t i = 0; i < fresh.size(); ++i) {
    double d = state.running_sum[i] - fresh[i];
    num += d * d;
    den += fresh[i] * fresh[i];
  }
  state.running_sum = std::move(fresh);
  state.last_sync_drift = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
  return state.last_sync_drift;
}

RhoSchedule::RhoSchedule(double rho_min, double rho_max, double plateau_rel, long window)
    : rho_(rho_min), rho_max_(rho_max), plateau_rel_(plateau_rel), window_(window) {
  if (!(rho_min > 0) || !(rho_max >= rho_min))
    fail_usage("resolution schedule requires 0 < rho_min <= rho_max");
  if (window < 1) fail_usage("plateau window must be at least one iteration");
}

RhoSchedule::Event RhoSchedule::observe(double held_out_error, long tau) {
  history_.emplace_back(tau, held_out_error);
  // oldest recorded error at least `window_` iterations back
  const std::pair<long, double>* past = nullptr;
  for (const auto& h : history_)
    if (tau - h.first >= window_) past = &h;
  if (!past) return Event::none;
  double before = past->second;
  double rel = before != 0 ? (before - held_out_error) / std::abs(before) : 0.0;
  if (rel >= plateau_rel_) return Event::none;

  history_.clear();
  if (rho_ >= rho_max_) return Event::saturated;
  rho_ = std::min(2 * rho_, rho_max_);
  return Event::raised;
}

void RhoSchedule::restore(const Snapshot& s) {
  if (!(s.rho > 0) || s.rho > rho_max_)
    fail_data("resolution snapshot rho outside the schedule's range");
  rho_ = s.rho;
  history_ = s.history;
}

}  // namespace cryoforge
