#include "core/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "core/rng.hpp"
#include "core/types.hpp"

namespace cryoforge {

void EvalOptions::check() const {
  if (exhaustive_threshold < 1) fail_usage("exhaustive threshold must be at least 1");
  if (!(s0 >= 1)) fail_usage("budget scale s0 must be at least 1");
  if (stamp_tau < 0) fail_usage("evidence iteration stamp must be nonnegative");
}

namespace {

IsMarginal exhaustive_observation(const ImageTerms& terms, const PreparedVolume& vol,
                                  const QuadratureScheme& scheme) {
  IsMarginal obs;
  obs.directions = full_direction_selection(scheme);
  obs.inplanes = full_inplane_selection(scheme);
  obs.shifts = full_shift_selection(scheme);
  obs.result = marginal_over(terms, vol, scheme, obs.directions, obs.inplanes, obs.shifts);
  obs.fraction_evaluated = 1.0;
  return obs;
}

}  // namespace

ImageEval expected_mse(const ImageTerms& terms, const PreparedVolume& vol,
                       const QuadratureScheme& scheme, ImportanceState& state, long tau,
                       std::mt19937_64& rng, const EvalOptions& opts) {
  opts.check();
  IsMarginal obs;
  if (scheme.total_points() <= opts.exhaustive_threshold) {
    obs = exhaustive_observation(terms, vol, scheme);
  } else {
    ImportanceProposals proposals = build_all_importance(state, scheme, nullptr, opts.s0);
    obs = is_marginal(terms, vol, scheme, proposals, rng);
  }

  ImageEval out;
  out.emse = obs.result.expected_resid2;
  out.log_marginal = obs.result.log_marginal;
  out.fraction_evaluated = obs.fraction_evaluated;
  out.flagged = !std::isfinite(out.log_marginal);
  // flagged evidence is all -inf; storing it would poison later proposals
  if (!out.flagged) update_state(state, obs, tau, int(scheme.generation));
  return out;
}

EvalReport evaluate_dataset(const std::vector<Image>& images, const std::vector<CtfParams>& ctfs,
                            const DensityVolume& volume, const QuadratureScheme& scheme,
                            double sigma, const EvalOptions& opts) {
  opts.check();
  if (images.empty()) fail_usage("evaluation needs at least one image");
  if (images.size() != ctfs.size())
    fail_usage("image count " + std::to_string(images.size()) + " does not match CTF count " +
               std::to_string(ctfs.size()));

  PreparedVolume pv = prepare_projection_volume(volume);
  EvalReport report;
  report.rho = scheme.rho;
  report.sigma = sigma;
  report.per_image.resize(images.size());

  std::vector<ImportanceState> states(images.size());
  double sum_norm = 0;       // sum of emse / D over valid images
  double sum_fraction = 0;
  for (size_t i = 0; i < images.size(); ++i) {
    ImageTerms terms = make_image_terms(images[i], ctfs[i], scheme, sigma);
    auto rng = make_rng(opts.seed, "eval-image", uint64_t(i));
    ImageEval ev = expected_mse(terms, pv, scheme, states[i], opts.stamp_tau, rng, opts);
    report.per_image[i] = ev;
    sum_fraction += ev.fraction_evaluated;
    if (ev.flagged) {
      ++report.flagged_count;
    } else {
      sum_norm += ev.emse / terms.lattice->coefficient_count();
    }
  }

  size_t valid = images.size() - report.flagged_count;
  if (valid == 0) fail_numeric("every image was flagged: no pose reached finite density");
  report.rremse = std::sqrt(sum_norm / (sigma * sigma * double(valid)));
  report.mean_fraction_evaluated = sum_fraction / double(images.size());
  report.direction_marginal = direction_marginal_average(states, scheme, opts.s0);
  return report;
}

std::vector<double> direction_marginal_average(const std::vector<ImportanceState>& states,
                                               const QuadratureScheme& scheme, double s0) {
  if (states.empty()) fail_usage("direction marginal needs at least one state");
  const size_t m = scheme.directions.points.size();
  std::vector<double> mean(m, 0.0);
  for (const auto& st : states) {
    ImportanceDistribution d =
        build_importance_directions(st.directions, scheme.directions, st.last_seen_iteration,
                                    nullptr, s0);
    if (d.q.size() != m) fail_usage("stored state does not match the scheme's direction count");
    for (size_t j = 0; j < m; ++j) mean[j] += d.q[j];
  }
  for (double& v : mean) v /= double(states.size());
  return mean;
}

double epoch_kl(const std::vector<double>& prev, const std::vector<double>& curr) {
  return kl_divergence(curr, prev);
}

}  // namespace cryoforge
