#include "core/importance.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include "core/rng.hpp"
#include "core/types.hpp"

namespace cryoforge {

ImportanceSchedules importance_schedules(long tau_prev) {
  ImportanceSchedules s;
  long k = tau_prev >= 0 ? tau_prev / 50 : 0;
  if (k <= 0) return s;  // alpha = 1, proposal collapses to the prior
  s.flatten = false;
  s.alpha = std::max(0.05, std::pow(2.0, -0.25 * double(k)));
  s.temperature = std::max(1.25, std::pow(2.0, 10.0 / double(k)));
  return s;
}

double kernel_vmf(const Vec3& a, const Vec3& b, double kappa) {
  if (!(kappa > 0)) fail_usage("vMF kernel bandwidth must be positive");
  return std::exp(kappa * (a.dot(b) - 1.0));
}

double kernel_gauss(const Vec2& a, const Vec2& b, double kappa) {
  if (!(kappa > 0)) fail_usage("Gaussian kernel bandwidth must be positive");
  double dx = a.x - b.x, dy = a.y - b.y;
  return std::exp(-kappa * (dx * dx + dy * dy));
}

double vmf_kappa_for_spacing(double angular_spacing) {
  double c = 1.0 - std::cos(angular_spacing);
  if (!(c > 0)) fail_usage("vMF bandwidth rule needs a positive angular spacing");
  return std::log(2.0) / c;
}

double gauss_kappa_for_spacing(double spacing) {
  if (!(spacing > 0)) fail_usage("Gaussian bandwidth rule needs a positive spacing");
  return std::log(2.0) / (spacing * spacing);
}

double ess(const std::vector<double>& q) {
  double s2 = 0;
  for (double x : q) s2 += x * x;
  if (!(s2 > 0)) fail_usage("effective sample size of an empty distribution");
  return 1.0 / s2;
}

int sample_budget(const std::vector<double>& q, double s0) {
  if (!(s0 > 0)) fail_usage("sample budget factor must be positive");
  int m = int(q.size());
  double n = std::ceil(s0 * ess(q));
  return std::max(1, std::min(m, int(n)));
}

double entropy(const std::vector<double>& q) {
  double h = 0;
  for (double x : q)
    if (x > 0) h -= x * std::log(x);
  return h;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) fail_usage("KL divergence of distributions with different support");
  double d = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    if (q[i] <= 0) fail_numeric("KL divergence against a distribution without full support");
    d += p[i] * std::log(p[i] / q[i]);
  }
  return d;
}

namespace {

std::vector<double> uniform_probs(size_t m) {
  return std::vector<double>(m, 1.0 / double(m));
}

// A factor with a single quadrature point has nothing to sample.
ImportanceDistribution single_point_distribution() {
  ImportanceDistribution out;
  out.q = {1.0};
  out.budget = 1;
  out.exhaustive = true;
  return out;
}

// Shared proposal construction: anneal stored log phi by 1/T, smooth through
// the kernel, renormalize, and mix with the prior distribution.
ImportanceDistribution build_mixture(const FactorState& prev, size_t m, long tau_prev,
                                     const std::vector<double>* psi, double s0,
                                     const std::function<double(int stored, size_t j)>& log_kernel) {
  ImportanceDistribution out;
  std::vector<double> prior = psi ? *psi : uniform_probs(m);
  if (prior.size() != m) fail_usage("importance prior distribution has the wrong size");

  if (!prev.seen()) {
    out.q = uniform_probs(m);
    out.budget = int(m);
    out.exhaustive = true;
    return out;
  }

  ImportanceSchedules sched = importance_schedules(tau_prev);
  out.alpha = sched.alpha;
  out.temperature = sched.temperature;
  if (sched.flatten) {
    out.q = prior;
    out.budget = sample_budget(out.q, s0);
    return out;
  }

  // log phi normalized by its max before annealing, so the proposal is
  // invariant to rescaling the stored values
  double mx = -std::numeric_limits<double>::infinity();
  for (double lp : prev.log_phi)
    if (std::isfinite(lp)) mx = std::max(mx, lp);
  std::vector<double> log_smoothed(m, -std::numeric_limits<double>::infinity());
  if (std::isfinite(mx)) {
    for (size_t j = 0; j < m; ++j) {
      double acc_max = -std::numeric_limits<double>::infinity();
      std::vector<double> terms;
      terms.reserve(prev.indices.size());
      for (size_t i = 0; i < prev.indices.size(); ++i) {
        if (!std::isfinite(prev.log_phi[i])) continue;
        double t = (prev.log_phi[i] - mx) / sched.temperature + log_kernel(prev.indices[i], j);
        terms.push_back(t);
        acc_max = std::max(acc_max, t);
      }
      if (terms.empty()) continue;
      double s = 0;
      for (double t : terms) s += std::exp(t - acc_max);
      log_smoothed[j] = acc_max + std::log(s);
    }
  }

  double smax = *std::max_element(log_smoothed.begin(), log_smoothed.end());
  out.q.assign(m, 0.0);
  if (std::isfinite(smax)) {
    double z = 0;
    for (size_t j = 0; j < m; ++j) {
      out.q[j] = std::exp(log_smoothed[j] - smax);
      z += out.q[j];
    }
    for (size_t j = 0; j < m; ++j)
      out.q[j] = (1.0 - sched.alpha) * out.q[j] / z + sched.alpha * prior[j];
  } else {
    out.q = prior;
  }
  out.budget = sample_budget(out.q, s0);
  return out;
}

}  // namespace

ImportanceDistribution build_importance_directions(const FactorState& prev,
                                                   const DirectionSet& set, long tau_prev,
                                                   const std::vector<double>* psi, double s0) {
  double kappa = vmf_kappa_for_spacing(set.angular_spacing);
  return build_mixture(prev, set.points.size(), tau_prev, psi, s0,
                       [&](int i, size_t j) {
                         return kappa * (set.points[size_t(i)].dot(set.points[j]) - 1.0);
                       });
}

ImportanceDistribution build_importance_inplane(const FactorState& prev, const InplaneSet& set,
                                                long tau_prev, const std::vector<double>* psi,
                                                double s0) {
  if (set.angles.size() == 1) return single_point_distribution();
  double kappa = vmf_kappa_for_spacing(set.spacing);
  return build_mixture(prev, set.angles.size(), tau_prev, psi, s0, [&](int i, size_t j) {
    return kappa * (std::cos(set.angles[size_t(i)] - set.angles[j]) - 1.0);
  });
}

ImportanceDistribution build_importance_shifts(const FactorState& prev, const ShiftSet& set,
                                               long tau_prev, const std::vector<double>* psi,
                                               double s0) {
  if (set.points.size() == 1) return single_point_distribution();
  double kappa = gauss_kappa_for_spacing(set.spacing);
  return build_mixture(prev, set.points.size(), tau_prev, psi, s0, [&](int i, size_t j) {
    double dx = set.points[size_t(i)].x - set.points[j].x;
    double dy = set.points[size_t(i)].y - set.points[j].y;
    return -kappa * (dx * dx + dy * dy);
  });
}

ImportanceProposals build_all_importance(const ImportanceState& state,
                                         const QuadratureScheme& scheme,
                                         const std::vector<double>* psi_dir, double s0) {
  if (state.last_seen_iteration >= 0 && state.scheme_generation != scheme.generation)
    fail_usage("stored importance state belongs to scheme generation " +
               std::to_string(state.scheme_generation) + ", expected " +
               std::to_string(scheme.generation) + "; migrate it first");
  ImportanceProposals p;
  long tau_prev = state.last_seen_iteration;
  p.directions =
      build_importance_directions(state.directions, scheme.directions, tau_prev, psi_dir, s0);
  p.inplanes = build_importance_inplane(state.inplanes, scheme.inplane, tau_prev, nullptr, s0);
  p.shifts = build_importance_shifts(state.shifts, scheme.shifts, tau_prev, nullptr, s0);
  return p;
}

FactorSelection sample_selection(const ImportanceDistribution& dist,
                                 const std::vector<double>& weights,
                                 const std::vector<double>* prior_values, std::mt19937_64& rng) {
  size_t m = dist.q.size();
  if (weights.size() != m) fail_usage("selection weights do not match the proposal size");
  FactorSelection sel;
  if (dist.exhaustive) {
    for (size_t j = 0; j < m; ++j) {
      sel.idx.push_back(int(j));
      double c = weights[j] * (prior_values ? (*prior_values)[j] : 1.0);
      sel.log_c.push_back(std::log(c));
    }
    return sel;
  }

  std::vector<double> cum(m);
  double acc = 0;
  for (size_t j = 0; j < m; ++j) {
    acc += dist.q[j];
    cum[j] = acc;
  }
  std::map<int, int> counts;
  for (int d = 0; d < dist.budget; ++d) {
    double u = uniform01(rng) * acc;
    size_t j = size_t(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (j >= m) j = m - 1;
    ++counts[int(j)];
  }
  for (auto [j, c] : counts) {
    sel.idx.push_back(j);
    double base = weights[size_t(j)] * (prior_values ? (*prior_values)[size_t(j)] : 1.0);
    sel.log_c.push_back(std::log(double(c) * base / (double(dist.budget) * dist.q[size_t(j)])));
  }
  return sel;
}

IsMarginal is_marginal(const ImageTerms& terms, const PreparedVolume& vol,
                       const QuadratureScheme& scheme, const ImportanceProposals& proposals,
                       std::mt19937_64& rng, FourierVolume* grad_accum) {
  IsMarginal out;
  out.directions = sample_selection(proposals.directions, scheme.directions.weights, nullptr, rng);
  out.inplanes = sample_selection(proposals.inplanes, scheme.inplane.weights, nullptr, rng);
  out.shifts = sample_selection(proposals.shifts, scheme.shifts.weights,
                                &scheme.shifts.prior_values, rng);
  out.result = marginal_over(terms, vol, scheme, out.directions, out.inplanes, out.shifts,
                             grad_accum);
  double distinct = double(out.directions.idx.size()) * double(out.inplanes.idx.size()) *
                    double(out.shifts.idx.size());
  out.fraction_evaluated = distinct / double(scheme.total_points());
  return out;
}

void update_state(ImportanceState& state, const IsMarginal& obs, long tau, int generation) {
  state.directions.indices = obs.directions.idx;
  state.directions.log_phi = obs.result.log_phi_dir;
  state.inplanes.indices = obs.inplanes.idx;
  state.inplanes.log_phi = obs.result.log_phi_inplane;
  state.shifts.indices = obs.shifts.idx;
  state.shifts.log_phi = obs.result.log_phi_shift;
  state.last_seen_iteration = tau;
  state.scheme_generation = generation;
}

namespace {

void migrate_factor(FactorState& f, const std::vector<int>& index_map) {
  std::map<int, double> merged;
  for (size_t i = 0; i < f.indices.size(); ++i) {
    int old_idx = f.indices[i];
    if (old_idx < 0 || size_t(old_idx) >= index_map.size())
      fail_usage("stored importance index out of range for this scheme upgrade");
    int new_idx = index_map[size_t(old_idx)];
    auto it = merged.find(new_idx);
    if (it == merged.end())
      merged[new_idx] = f.log_phi[i];
    else
      it->second = std::max(it->second, f.log_phi[i]);
  }
  f.indices.clear();
  f.log_phi.clear();
  for (auto [idx, lp] : merged) {
    f.indices.push_back(idx);
    f.log_phi.push_back(lp);
  }
}

}  // namespace

void migrate_state(ImportanceState& state, const SchemeUpgrade& upgrade) {
  migrate_factor(state.directions, upgrade.direction_map);
  migrate_factor(state.inplanes, upgrade.inplane_map);
  migrate_factor(state.shifts, upgrade.shift_map);
  state.scheme_generation = upgrade.scheme.generation;
}

}  // namespace cryoforge
