#pragma once

#include <random>
#include <vector>

#include "core/likelihood.hpp"
#include "core/quadrature.hpp"

namespace cryoforge {

// Stored evidence for one pose factor of one image: the quadrature indices
// evaluated on the last visit and the (log-domain, un-normalized) marginal
// contribution observed at each of them.
struct FactorState {
  std::vector<int> indices;
  std::vector<double> log_phi;

  bool seen() const { return !indices.empty(); }
};

struct ImportanceState {
  FactorState directions;
  FactorState inplanes;
  FactorState shifts;
  long last_seen_iteration = -1;
  int scheme_generation = -1;
};

// Proposal over one factor's M quadrature points for the next visit.
struct ImportanceDistribution {
  std::vector<double> q;  // sums to 1, floored by alpha * psi when not exhaustive
  int budget = 0;         // number of draws N
  double alpha = 1.0;
  double temperature = 0;  // 0 encodes "flattened" (first visits / early iterations)
  bool exhaustive = false;  // evaluate every point once, no sampling
};

struct ImportanceSchedules {
  double alpha = 1.0;
  double temperature = 0;  // 0 = flattened
  bool flatten = true;
};

// Annealing schedules as a function of the iteration at which the stored
// evidence was computed. Before iteration 50 the evidence is ignored and the
// proposal falls back to the prior distribution.
ImportanceSchedules importance_schedules(long tau_prev);

// Smoothing kernels, normalized so K(x, x) = 1.
double kernel_vmf(const Vec3& a, const Vec3& b, double kappa);
double kernel_gauss(const Vec2& a, const Vec2& b, double kappa);

// Bandwidths solving K(one quadrature spacing) = 1/2.
double vmf_kappa_for_spacing(double angular_spacing);
double gauss_kappa_for_spacing(double spacing);

double ess(const std::vector<double>& q);
int sample_budget(const std::vector<double>& q, double s0);

// Entropy and KL divergence diagnostics over discrete distributions.
double entropy(const std::vector<double>& q);
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Proposal construction per factor. `psi` is the fallback/mixture prior over
// the factor's points (uniform when null). `s0` scales the sample budget.
ImportanceDistribution build_importance_directions(const FactorState& prev,
                                                   const DirectionSet& set, long tau_prev,
                                                   const std::vector<double>* psi = nullptr,
                                                   double s0 = 10.0);
ImportanceDistribution build_importance_inplane(const FactorState& prev, const InplaneSet& set,
                                                long tau_prev,
                                                const std::vector<double>* psi = nullptr,
                                                double s0 = 10.0);
ImportanceDistribution build_importance_shifts(const FactorState& prev, const ShiftSet& set,
                                               long tau_prev,
                                               const std::vector<double>* psi = nullptr,
                                               double s0 = 10.0);

struct ImportanceProposals {
  ImportanceDistribution directions;
  ImportanceDistribution inplanes;
  ImportanceDistribution shifts;
};

// Convenience wrapper covering all three factors; validates that the stored
// state belongs to this scheme generation.
ImportanceProposals build_all_importance(const ImportanceState& state,
                                         const QuadratureScheme& scheme,
                                         const std::vector<double>* psi_dir = nullptr,
                                         double s0 = 10.0);

// Draw a weighted point selection from a proposal: multinomial with
// replacement, duplicates collapsed with their multiplicity folded into the
// estimator coefficients log(m w prior / (N q)).
FactorSelection sample_selection(const ImportanceDistribution& dist,
                                 const std::vector<double>& weights,
                                 const std::vector<double>* prior_values, std::mt19937_64& rng);

struct IsMarginal {
  MarginalResult result;
  FactorSelection directions;
  FactorSelection inplanes;
  FactorSelection shifts;
  double fraction_evaluated = 1.0;  // distinct poses evaluated / full grid size
};

// Monte Carlo estimate of the pose-marginalized likelihood using independent
// per-factor samplers; unbiased for the exhaustive quadrature sum. When
// grad_accum is given, the gradient scatter is accumulated into it in the
// padded Fourier domain (lift it with lift_scatter once per batch).
IsMarginal is_marginal(const ImageTerms& terms, const PreparedVolume& vol,
                       const QuadratureScheme& scheme, const ImportanceProposals& proposals,
                       std::mt19937_64& rng, FourierVolume* grad_accum = nullptr);

// Store the newly observed evidence for the next visit.
void update_state(ImportanceState& state, const IsMarginal& obs, long tau, int generation);

// Carry stored evidence across a scheme refinement via the nearest-point
// correspondence; colliding entries keep the strongest value.
void migrate_state(ImportanceState& state, const SchemeUpgrade& upgrade);

}  // namespace cryoforge
