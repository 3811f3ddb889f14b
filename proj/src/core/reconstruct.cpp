#include "core/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "core/evaluation.hpp"
#include "core/likelihood.hpp"
#include "core/rng.hpp"
#include "core/simulator.hpp"
#include "core/types.hpp"

namespace cryoforge {

void ReconConfig::check() const {
  if (!(rho_min > 0) || !(rho_max >= rho_min))
    fail_usage("reconstruction requires 0 < rho_min <= rho_max");
  if (sigma_t < 0) fail_usage("shift prior std must be nonnegative");
  if (batch_size < 1) fail_usage("batch size must be at least 1");
  if (max_iterations < 0) fail_usage("iteration budget must be nonnegative");
  if (held_out_count < 0) fail_usage("held-out count must be nonnegative");
  if (!(s0 >= 1)) fail_usage("importance budget scale s0 must be at least 1");
  if (sigma < 0 || !std::isfinite(sigma)) fail_usage("noise sigma must be finite and nonnegative");
  if (particle_radius_a < 0) fail_usage("particle radius must be nonnegative");
  if (eval_every < 1) fail_usage("evaluation cadence must be at least 1");
  if (checkpoint_every < 0) fail_usage("checkpoint cadence must be nonnegative");
  if (!(plateau_rel > 0)) fail_usage("plateau threshold must be positive");
  if (plateau_window < 1) fail_usage("plateau window must be at least 1");
  prior.check();
}

namespace {

DensityVolume volume_view(const ReconState& st) {
  DensityVolume v(st.n, st.voxel_size);
  v.data = st.sagd.v;
  return v;
}

double estimate_sigma(const std::vector<Image>& images, int train_count, double radius_a) {
  const int probes = std::min(train_count, 50);
  double acc = 0;
  for (int i = 0; i < probes; ++i) acc += estimate_noise_sigma(images[size_t(i)], radius_a);
  const double sigma = acc / double(probes);
  if (!(sigma > 0) || !std::isfinite(sigma))
    fail_data("could not estimate a positive noise level from the corner margins");
  return sigma;
}

// Average of the per-image direction proposals over the training images, i.e.
// the dataset view of where mass currently sits on the sphere.
std::vector<double> train_direction_marginal(const std::vector<ImportanceState>& states,
                                             int train_count, const QuadratureScheme& scheme,
                                             double s0) {
  std::vector<ImportanceState> train(states.begin(), states.begin() + train_count);
  return direction_marginal_average(train, scheme, s0);
}

}  // namespace

DensityVolume checkpoint_volume(const ReconState& state) { return volume_view(state); }

DensityVolume default_initial_volume(int n, double voxel_size, uint64_t seed) {
  DensityVolume v = phantom_spheres(n, voxel_size, 24, substream_seed(seed, "init-volume"));
  // normalize the occupied region to unit mean so the first line search starts
  // from a sane magnitude regardless of grid size
  double sum = 0;
  size_t occupied = 0;
  for (double x : v.data)
    if (x > 0) {
      sum += x;
      ++occupied;
    }
  if (occupied > 0 && sum > 0)
    for (double& x : v.data) x /= (sum / double(occupied));
  return v;
}

ReconResult run_reconstruction(const std::vector<Image>& images,
                               const std::vector<CtfParams>& ctfs, const DensityVolume& init,
                               const ReconConfig& cfg, const ReconState* resume,
                               const CheckpointSink& checkpoint_sink) {
  cfg.check();
  if (images.empty()) fail_usage("reconstruction needs at least one image");
  if (ctfs.size() != images.size())
    fail_usage("image and ctf counts disagree: " + std::to_string(images.size()) + " vs " +
               std::to_string(ctfs.size()));
  const int n = images[0].n;
  const double voxel = images[0].pixel_size;
  for (const Image& img : images)
    if (img.n != n || img.pixel_size != voxel)
      fail_usage("all images must share size and pixel size");
  if (init.n != n) fail_usage("initial volume grid does not match the images");
  if (std::abs(init.voxel_size - voxel) > 1e-9 * voxel)
    fail_usage("initial volume voxel size does not match the image pixel size");

  const int total = int(images.size());
  if (cfg.held_out_count >= total)
    fail_usage("held-out count " + std::to_string(cfg.held_out_count) +
               " leaves no training images out of " + std::to_string(total));
  const int train_count = total - cfg.held_out_count;

  const std::vector<Minibatch> batches = partition_minibatches(
      train_count, cfg.batch_size, substream_seed(cfg.seed, "batch-partition"));
  const int batch_count = int(batches.size());

  RhoSchedule schedule(cfg.rho_min, cfg.rho_max, cfg.plateau_rel, cfg.plateau_window);

  ReconState st;
  if (resume) {
    st = *resume;
    if (st.n != n || std::abs(st.voxel_size - voxel) > 1e-9 * voxel)
      fail_data("checkpoint grid does not match the dataset");
    if (st.image_count != total || st.batch_count != batch_count)
      fail_data("checkpoint was created for a different dataset partition");
    if (st.seed != cfg.seed) fail_data("checkpoint was created with a different seed");
    if (st.states.size() != images.size())
      fail_data("checkpoint state count does not match the dataset");
    schedule.restore(st.rho);
  } else {
    st.n = n;
    st.voxel_size = voxel;
    st.image_count = total;
    st.batch_count = batch_count;
    st.seed = cfg.seed;
    st.sigma = cfg.sigma > 0 ? cfg.sigma
                             : estimate_sigma(images, train_count,
                                              cfg.particle_radius_a > 0 ? cfg.particle_radius_a
                                                                        : 0.4 * n * voxel);
    st.sagd = make_sagd_state(init.data, batch_count, substream_seed(cfg.seed, "batch-order"));
    st.states.assign(images.size(), ImportanceState{});
    st.scheme_generation = 0;
    st.rho = schedule.snapshot();
  }

  QuadratureScheme scheme = build_scheme(schedule.current(), n, voxel, cfg.sigma_t);
  scheme.generation = st.scheme_generation;

  ReconResult result;
  result.sigma = st.sigma;

  const bool uniform_prior = cfg.prior.kind == PriorKind::Uniform;
  EvalOptions eval_opts;
  eval_opts.s0 = 100.0;

  try {
    while (st.sagd.tau < cfg.max_iterations) {
      const long tau = st.sagd.tau;
      const DensityVolume current = volume_view(st);
      const PreparedVolume pv = prepare_projection_volume(current);
      const int k = sagd_batch_for(st.sagd, batch_count);
      const Minibatch& batch = batches[size_t(k)];

      FourierVolume scatter(pv.spectrum.n, pv.spectrum.voxel_size);
      DiagRow row;
      row.iteration = tau + 1;
      row.batch = k;

      const std::vector<double>* psi_dir = nullptr;
      if (cfg.dataset_psi &&
          st.prev_direction_marginal.size() == scheme.directions.points.size())
        psi_dir = &st.prev_direction_marginal;

      std::vector<ImageTerms> batch_terms;
      std::vector<IsMarginal> batch_obs;
      batch_terms.reserve(batch.indices.size());
      batch_obs.reserve(batch.indices.size());

      double batch_nll = 0;
      for (int img_idx : batch.indices) {
        const size_t i = size_t(img_idx);
        batch_terms.push_back(make_image_terms(images[i], ctfs[i], scheme, st.sigma));
        const ImageTerms& terms = batch_terms.back();
        ImportanceProposals proposals = build_all_importance(st.states[i], scheme, psi_dir, cfg.s0);
        std::mt19937_64 rng = make_rng(cfg.seed, "is-sample", uint64_t(tau), uint64_t(img_idx));
        IsMarginal obs = is_marginal(terms, pv, scheme, proposals, rng, &scatter);
        if (!std::isfinite(obs.result.log_marginal))
          fail_numeric("non-finite minibatch likelihood at iteration " + std::to_string(tau) +
                       ", image " + std::to_string(img_idx));
        update_state(st.states[i], obs, tau, int(scheme.generation));
        batch_nll -= obs.result.log_marginal;
        row.mean_fraction_evaluated += obs.fraction_evaluated;
        row.mean_ess_directions += ess(proposals.directions.q);
        row.mean_ess_inplane += ess(proposals.inplanes.q);
        row.mean_ess_shifts += ess(proposals.shifts.q);
        batch_obs.push_back(std::move(obs));
      }
      const double inv_b = 1.0 / double(batch.indices.size());
      row.mean_fraction_evaluated *= inv_b;
      row.mean_ess_directions *= inv_b;
      row.mean_ess_inplane *= inv_b;
      row.mean_ess_shifts *= inv_b;
      row.batch_nll = batch_nll;
      row.epsilon = epsilon_schedule(tau);

      DensityVolume lifted = lift_scatter(scatter, pv);

      // The probe re-evaluates this batch's estimator (same selections, same
      // importance coefficients) at a trial iterate, as the line search needs.
      auto probe = [&](const std::vector<double>& flat) {
        DensityVolume cand(n, voxel);
        cand.data = flat;
        PreparedVolume pvc = prepare_projection_volume(cand);
        double f = 0;
        for (size_t j = 0; j < batch_obs.size(); ++j)
          f -= marginal_over(batch_terms[j], pvc, scheme, batch_obs[j].directions,
                             batch_obs[j].inplanes, batch_obs[j].shifts)
                   .log_marginal;
        return f;
      };

      std::vector<double> prior_grad_flat;
      const std::vector<double>* prior_ptr = nullptr;
      if (!uniform_prior) {
        prior_grad_flat = neg_log_prior_grad(current, cfg.prior).data;
        prior_ptr = &prior_grad_flat;
      }

      sagd_step(st.sagd, k, lifted.data, batch_nll, probe, prior_ptr);
      row.lipschitz = st.sagd.lipschitz;
      row.rho = schedule.current();
      const long done = st.sagd.tau;  // tau + 1

      if (done % batch_count == 0) {  // an epoch just completed
        std::vector<double> marginal =
            train_direction_marginal(st.states, train_count, scheme, cfg.s0);
        if (st.prev_direction_marginal.size() == marginal.size())
          row.epoch_kl = epoch_kl(st.prev_direction_marginal, marginal);
        st.prev_direction_marginal = std::move(marginal);
      }

      bool saturated = false;
      if (cfg.held_out_count > 0 && done % cfg.eval_every == 0) {
        const DensityVolume post = volume_view(st);
        const PreparedVolume pv_post = prepare_projection_volume(post);
        double acc = 0;
        long valid = 0;
        for (int h = 0; h < cfg.held_out_count; ++h) {
          const size_t i = size_t(train_count + h);
          ImageTerms terms = make_image_terms(images[i], ctfs[i], scheme, st.sigma);
          std::mt19937_64 rng = make_rng(cfg.seed, "eval-is", uint64_t(done), uint64_t(i));
          ImageEval ev = expected_mse(terms, pv_post, scheme, st.states[i], done, rng, eval_opts);
          if (ev.flagged) continue;
          acc += ev.emse / double(terms.lattice->coefficient_count());
          ++valid;
        }
        if (valid == 0) fail_numeric("every held-out image was flagged during evaluation");
        const double rremse = std::sqrt(acc / (st.sigma * st.sigma * double(valid)));
        st.last_rremse = rremse;
        row.held_out_rremse = rremse;

        RhoSchedule::Event event = schedule.observe(rremse, done);
        st.rho = schedule.snapshot();
        if (event == RhoSchedule::Event::raised) {
          row.rho_event = 1;
          SchemeUpgrade up = upgrade_scheme(scheme, schedule.current(), n, voxel);
          for (ImportanceState& s : st.states) migrate_state(s, up);
          scheme = std::move(up.scheme);
          st.scheme_generation = scheme.generation;
          st.sagd.force_line_search = true;  // the objective landscape just changed
          st.prev_direction_marginal.clear();  // direction grid changed; KL restarts
        } else if (event == RhoSchedule::Event::saturated) {
          row.rho_event = 2;
          saturated = true;
        }
      }

      result.diagnostics.push_back(row);

      if (checkpoint_sink && cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0)
        checkpoint_sink(st);

      if (saturated) {
        result.saturated = true;
        break;
      }
    }
  } catch (const Error&) {
    if (checkpoint_sink) {
      try {
        checkpoint_sink(st);
      } catch (...) {
        // the original error is the one worth reporting
      }
    }
    throw;
  }

  st.rho = schedule.snapshot();
  result.volume = volume_view(st);
  result.iterations = st.sagd.tau;
  result.final_rremse = st.last_rremse;
  result.state = std::move(st);
  return result;
}

}  // namespace cryoforge
