#include "cryoforge.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <set>
#include <string>
#include <vector>

#include "core/evaluation.hpp"
#include "core/likelihood.hpp"
#include "core/reconstruct.hpp"
#include "core/rng.hpp"
#include "core/simulator.hpp"
#include "core/types.hpp"
#include "io/checkpoint.hpp"
#include "io/config.hpp"
#include "io/manifest.hpp"
#include "io/mrc.hpp"
#include "io/text.hpp"

using namespace cryoforge;
namespace fs = std::filesystem;

struct cf_config {
  ConfigMap map;
};
struct cf_dataset {
  LoadedDataset ds;
};
struct cf_volume {
  DensityVolume v;
};
struct cf_report {
  EvalReport rep;
};

namespace {

thread_local std::string t_error;

cf_status to_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return CF_ERR_USAGE;
    case ErrorKind::Data:
      return CF_ERR_DATA;
    case ErrorKind::Numeric:
      return CF_ERR_NUMERIC;
  }
  return CF_ERR_USAGE;
}

template <typename Fn>
cf_status guarded(Fn&& fn) {
  try {
    fn();
    return CF_OK;
  } catch (const Error& e) {
    t_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    t_error = "out of memory";
    return CF_ERR_NUMERIC;
  } catch (const std::exception& e) {
    t_error = e.what();
    return CF_ERR_NUMERIC;
  }
}

void require(bool ok, const char* msg) {
  if (!ok) fail_usage(msg);
}

void check_known_keys(const ConfigMap& cfg, const std::set<std::string>& allowed,
                      const char* operation) {
  for (const auto& [key, value] : cfg.entries())
    if (!allowed.count(key))
      fail_usage("unknown config key '" + key + "' for " + operation);
}

const std::set<std::string> kSimulateKeys = {
    "n",      "pixel_size", "image_count",  "snr",          "sigma_t",      "defocus_min",
    "defocus_max", "cs_mm", "kv",           "amp_contrast", "bfactor",      "seed",
    "phantom", "phantom_kind", "phantom_path", "sphere_count"};

const std::set<std::string> kReconstructKeys = {
    "rho_min",      "rho_max",         "sigma_t",        "batch_size",   "max_iterations",
    "held_out",     "s0",              "sigma",          "particle_radius", "prior",
    "prior_lambda", "prior_sigma_car", "dataset_psi",    "seed",         "eval_every",
    "checkpoint_every", "plateau_rel", "plateau_window", "init_volume",  "resume"};

const std::set<std::string> kEvaluateKeys = {"rho",       "sigma_t",  "sigma",
                                             "s0",        "exhaustive_threshold",
                                             "stamp_tau", "seed",     "eval_count",
                                             "particle_radius"};

void write_resolved(const ConfigMap& resolved, const std::string& out_dir) {
  std::string path = (fs::path(out_dir) / "config.resolved").string();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot create resolved config: " + path);
  out << resolved.render();
  out.flush();
  if (!out) fail_data("write error for resolved config: " + path);
}

double dataset_sigma_or_estimate(const LoadedDataset& ds, double key_sigma, double radius_key) {
  if (key_sigma > 0) return key_sigma;
  if (ds.manifest.noise_sigma > 0) return ds.manifest.noise_sigma;
  const int n = ds.images[0].n;
  const double radius = radius_key > 0 ? radius_key : 0.4 * n * ds.images[0].pixel_size;
  const size_t probes = std::min<size_t>(ds.images.size(), 50);
  double acc = 0;
  for (size_t i = 0; i < probes; ++i) acc += estimate_noise_sigma(ds.images[i], radius);
  const double sigma = acc / double(probes);
  if (!(sigma > 0) || !std::isfinite(sigma))
    fail_data("could not estimate a positive noise level from the corner margins");
  return sigma;
}

}  // namespace

extern "C" {

const char* cf_version(void) { return "1.0.0"; }

const char* cf_last_error(void) { return t_error.c_str(); }

/* ---- configuration ------------------------------------------------- */

cf_status cf_config_new(cf_config** out) {
  return guarded([&] {
    require(out != nullptr, "cf_config_new: null output pointer");
    *out = new cf_config{};
  });
}

cf_status cf_config_load(const char* path, cf_config** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "cf_config_load: null argument");
    auto cfg = std::make_unique<cf_config>();
    cfg->map = ConfigMap::from_file(path);
    *out = cfg.release();
  });
}

cf_status cf_config_set(cf_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg != nullptr && key != nullptr && value != nullptr, "cf_config_set: null argument");
    require(key[0] != '\0', "cf_config_set: empty key");
    cfg->map.set(key, value);
  });
}

cf_status cf_config_get(const cf_config* cfg, const char* key, char* buf, size_t buflen) {
  return guarded([&] {
    require(cfg != nullptr && key != nullptr && buf != nullptr, "cf_config_get: null argument");
    if (!cfg->map.has(key)) fail_usage("config key not set: '" + std::string(key) + "'");
    const std::string value = cfg->map.get_string(key, "");
    if (value.size() + 1 > buflen)
      fail_usage("cf_config_get: buffer too small for key '" + std::string(key) + "'");
    std::memcpy(buf, value.c_str(), value.size() + 1);
  });
}

cf_status cf_config_write(const cf_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg != nullptr && path != nullptr, "cf_config_write: null argument");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_data("cannot create config file: " + std::string(path));
    out << cfg->map.render();
    out.flush();
    if (!out) fail_data("write error for config file: " + std::string(path));
  });
}

void cf_config_free(cf_config* cfg) { delete cfg; }

/* ---- datasets ------------------------------------------------------ */

cf_status cf_dataset_open(const char* manifest_path, cf_dataset** out) {
  return guarded([&] {
    require(manifest_path != nullptr && out != nullptr, "cf_dataset_open: null argument");
    auto ds = std::make_unique<cf_dataset>();
    ds->ds = load_dataset(manifest_path);
    *out = ds.release();
  });
}

cf_status cf_dataset_image_count(const cf_dataset* ds, int64_t* out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr, "cf_dataset_image_count: null argument");
    *out = int64_t(ds->ds.images.size());
  });
}

cf_status cf_dataset_image_size(const cf_dataset* ds, int32_t* out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr, "cf_dataset_image_size: null argument");
    *out = ds->ds.manifest.n;
  });
}

cf_status cf_dataset_pixel_size(const cf_dataset* ds, double* out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr, "cf_dataset_pixel_size: null argument");
    *out = ds->ds.manifest.pixel_size;
  });
}

cf_status cf_dataset_noise_sigma(const cf_dataset* ds, double* out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr, "cf_dataset_noise_sigma: null argument");
    *out = ds->ds.manifest.noise_sigma;
  });
}

void cf_dataset_free(cf_dataset* ds) { delete ds; }

/* ---- volumes ------------------------------------------------------- */

cf_status cf_volume_read_mrc(const char* path, cf_volume** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "cf_volume_read_mrc: null argument");
    auto vol = std::make_unique<cf_volume>();
    vol->v = read_mrc_volume(path);
    *out = vol.release();
  });
}

cf_status cf_volume_write_mrc(const cf_volume* vol, const char* path) {
  return guarded([&] {
    require(vol != nullptr && path != nullptr, "cf_volume_write_mrc: null argument");
    write_mrc_volume(path, vol->v);
  });
}

cf_status cf_volume_size(const cf_volume* vol, int32_t* out) {
  return guarded([&] {
    require(vol != nullptr && out != nullptr, "cf_volume_size: null argument");
    *out = vol->v.n;
  });
}

cf_status cf_volume_voxel_size(const cf_volume* vol, double* out) {
  return guarded([&] {
    require(vol != nullptr && out != nullptr, "cf_volume_voxel_size: null argument");
    *out = vol->v.voxel_size;
  });
}

cf_status cf_volume_stats(const cf_volume* vol, double* min, double* max, double* mean) {
  return guarded([&] {
    require(vol != nullptr, "cf_volume_stats: null volume");
    if (min) *min = vol->v.min_value();
    if (max) *max = vol->v.max_value();
    if (mean) *mean = vol->v.data.empty() ? 0.0 : vol->v.sum() / double(vol->v.data.size());
  });
}

void cf_volume_free(cf_volume* vol) { delete vol; }

/* ---- pipeline ------------------------------------------------------ */

cf_status cf_simulate(const cf_config* cfg, const char* out_dir) {
  return guarded([&] {
    require(cfg != nullptr && out_dir != nullptr, "cf_simulate: null argument");
    const ConfigMap& c = cfg->map;
    check_known_keys(c, kSimulateKeys, "simulate");

    SimConfig sim;
    sim.image_count = int(c.get_long("image_count", 1000));
    sim.snr = c.get_double("snr", 0.05);
    sim.sigma_t = c.get_double("sigma_t", 5.0);
    sim.defocus_min_a = c.get_double("defocus_min", 10000);
    sim.defocus_max_a = c.get_double("defocus_max", 20000);
    sim.cs_mm = c.get_double("cs_mm", 2.0);
    sim.voltage_kv = c.get_double("kv", 300);
    sim.amplitude_contrast = c.get_double("amp_contrast", 0.1);
    sim.envelope_b_factor = c.get_double("bfactor", 0);
    sim.seed = uint64_t(c.get_long("seed", 0));

    const std::string phantom = c.get_string("phantom", "spheres");
    DensityVolume truth;
    if (phantom == "file") {
      const std::string path = c.get_string("phantom_path", "");
      if (path.empty()) fail_usage("phantom=file requires the 'phantom_path' key");
      truth = read_mrc_volume(path);
      if (c.has("n") && c.get_long("n", 0) != truth.n)
        fail_usage("config key 'n' disagrees with the phantom volume's grid");
      if (c.has("pixel_size") &&
          std::abs(c.get_double("pixel_size", 0) - truth.voxel_size) > 1e-9 * truth.voxel_size)
        fail_usage("config key 'pixel_size' disagrees with the phantom volume");
    } else {
      const int n = int(c.get_long("n", 64));
      const double px = c.get_double("pixel_size", 1.5);
      if (phantom == "spheres") {
        truth = phantom_spheres(n, px, int(c.get_long("sphere_count", 24)),
                                substream_seed(sim.seed, "phantom"));
      } else if (phantom == "geometric") {
        truth = phantom_geometric(n, px, int(c.get_long("phantom_kind", 0)), sim.seed);
      } else {
        fail_usage("config key 'phantom': expected spheres, geometric, or file");
      }
    }

    fs::create_directories(out_dir);
    SimulatedDataset ds = simulate_dataset(truth, sim);
    write_dataset(out_dir, ds);
    write_mrc_volume((fs::path(out_dir) / "truth_volume.mrc").string(), truth);

    ConfigMap resolved;
    resolved.set("n", std::to_string(truth.n));
    resolved.set("pixel_size", fmt_double(truth.voxel_size));
    resolved.set("image_count", std::to_string(sim.image_count));
    resolved.set("snr", fmt_double(sim.snr));
    resolved.set("sigma_t", fmt_double(sim.sigma_t));
    resolved.set("defocus_min", fmt_double(sim.defocus_min_a));
    resolved.set("defocus_max", fmt_double(sim.defocus_max_a));
    resolved.set("cs_mm", fmt_double(sim.cs_mm));
    resolved.set("kv", fmt_double(sim.voltage_kv));
    resolved.set("amp_contrast", fmt_double(sim.amplitude_contrast));
    resolved.set("bfactor", fmt_double(sim.envelope_b_factor));
    resolved.set("seed", std::to_string(sim.seed));
    resolved.set("phantom", phantom);
    if (phantom == "file") resolved.set("phantom_path", c.get_string("phantom_path", ""));
    if (phantom == "geometric")
      resolved.set("phantom_kind", std::to_string(c.get_long("phantom_kind", 0)));
    if (phantom == "spheres")
      resolved.set("sphere_count", std::to_string(c.get_long("sphere_count", 24)));
    write_resolved(resolved, out_dir);
  });
}

cf_status cf_reconstruct(const cf_dataset* ds, const cf_config* cfg, const char* out_dir,
                         cf_volume** out_volume) {
  return guarded([&] {
    require(ds != nullptr && cfg != nullptr && out_dir != nullptr,
            "cf_reconstruct: null argument");
    const ConfigMap& c = cfg->map;
    check_known_keys(c, kReconstructKeys, "reconstruct");

    ReconConfig rc;
    rc.rho_min = c.get_double("rho_min", rc.rho_min);
    rc.rho_max = c.get_double("rho_max", rc.rho_max);
    rc.sigma_t = c.get_double("sigma_t", rc.sigma_t);
    rc.batch_size = int(c.get_long("batch_size", rc.batch_size));
    rc.max_iterations = c.get_long("max_iterations", rc.max_iterations);
    rc.held_out_count = int(c.get_long("held_out", rc.held_out_count));
    rc.s0 = c.get_double("s0", rc.s0);
    rc.sigma = c.get_double("sigma", 0);
    rc.particle_radius_a = c.get_double("particle_radius", 0);
    rc.dataset_psi = c.get_bool("dataset_psi", false);
    rc.seed = uint64_t(c.get_long("seed", 0));
    rc.eval_every = c.get_long("eval_every", rc.eval_every);
    rc.checkpoint_every = c.get_long("checkpoint_every", 0);
    rc.plateau_rel = c.get_double("plateau_rel", rc.plateau_rel);
    rc.plateau_window = c.get_long("plateau_window", rc.plateau_window);

    const std::string prior = c.get_string("prior", "uniform");
    if (prior == "uniform") {
      rc.prior.kind = PriorKind::Uniform;
    } else if (prior == "exp") {
      rc.prior.kind = PriorKind::Exponential;
      rc.prior.lambda = c.get_double("prior_lambda", 1.0);
    } else if (prior == "car") {
      rc.prior.kind = PriorKind::Car;
      rc.prior.sigma_car = c.get_double("prior_sigma_car", 1.0);
    } else {
      fail_usage("config key 'prior': expected uniform, exp, or car");
    }
    // use the dataset's recorded noise level when none is given
    if (rc.sigma == 0 && ds->ds.manifest.noise_sigma > 0) rc.sigma = ds->ds.manifest.noise_sigma;

    const int n = ds->ds.manifest.n;
    const double px = ds->ds.manifest.pixel_size;

    ReconState resume_state;
    const ReconState* resume = nullptr;
    DensityVolume init;
    const std::string resume_path = c.get_string("resume", "");
    const std::string init_path = c.get_string("init_volume", "");
    if (!resume_path.empty()) {
      if (!init_path.empty())
        fail_usage("'resume' and 'init_volume' are mutually exclusive");
      resume_state = read_checkpoint(resume_path);
      resume = &resume_state;
      init = checkpoint_volume(resume_state);
    } else if (!init_path.empty()) {
      init = read_mrc_volume(init_path);
    } else {
      init = default_initial_volume(n, px, rc.seed);
    }

    fs::create_directories(out_dir);
    const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.cfrg").string();
    CheckpointSink sink = [&](const ReconState& st) { write_checkpoint(ckpt_path, st); };

    ReconResult res = run_reconstruction(ds->ds.images, ds->ds.ctfs, init, rc, resume, sink);

    write_mrc_volume((fs::path(out_dir) / "volume.mrc").string(), res.volume);
    write_diagnostics_csv((fs::path(out_dir) / "diagnostics.csv").string(), res.diagnostics);
    write_checkpoint(ckpt_path, res.state);

    ConfigMap summary;
    summary.set("iterations", std::to_string(res.iterations));
    summary.set("saturated", res.saturated ? "true" : "false");
    summary.set("sigma", fmt_double(res.sigma));
    summary.set("rho_final", fmt_double(res.state.rho.rho));
    if (!std::isnan(res.final_rremse))
      summary.set("held_out_rremse", fmt_double(res.final_rremse));
    {
      std::string path = (fs::path(out_dir) / "run.summary").string();
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      if (!out) fail_data("cannot create run summary: " + path);
      out << summary.render();
      out.flush();
      if (!out) fail_data("write error for run summary: " + path);
    }

    ConfigMap resolved;
    resolved.set("rho_min", fmt_double(rc.rho_min));
    resolved.set("rho_max", fmt_double(rc.rho_max));
    resolved.set("sigma_t", fmt_double(rc.sigma_t));
    resolved.set("batch_size", std::to_string(rc.batch_size));
    resolved.set("max_iterations", std::to_string(rc.max_iterations));
    resolved.set("held_out", std::to_string(rc.held_out_count));
    resolved.set("s0", fmt_double(rc.s0));
    resolved.set("sigma", fmt_double(res.sigma));
    resolved.set("particle_radius", fmt_double(rc.particle_radius_a));
    resolved.set("prior", prior);
    if (rc.prior.kind == PriorKind::Exponential)
      resolved.set("prior_lambda", fmt_double(rc.prior.lambda));
    if (rc.prior.kind == PriorKind::Car)
      resolved.set("prior_sigma_car", fmt_double(rc.prior.sigma_car));
    resolved.set("dataset_psi", rc.dataset_psi ? "true" : "false");
    resolved.set("seed", std::to_string(rc.seed));
    resolved.set("eval_every", std::to_string(rc.eval_every));
    resolved.set("checkpoint_every", std::to_string(rc.checkpoint_every));
    resolved.set("plateau_rel", fmt_double(rc.plateau_rel));
    resolved.set("plateau_window", std::to_string(rc.plateau_window));
    if (!init_path.empty()) resolved.set("init_volume", init_path);
    if (!resume_path.empty()) resolved.set("resume", resume_path);
    write_resolved(resolved, out_dir);

    if (out_volume) *out_volume = new cf_volume{std::move(res.volume)};
  });
}

cf_status cf_evaluate(const cf_volume* vol, const cf_dataset* ds, const cf_config* cfg,
                      const char* out_dir, cf_report** out) {
  return guarded([&] {
    require(vol != nullptr && ds != nullptr && cfg != nullptr, "cf_evaluate: null argument");
    const ConfigMap& c = cfg->map;
    check_known_keys(c, kEvaluateKeys, "evaluate");

    const DensityVolume& v = vol->v;
    if (v.n != ds->ds.manifest.n)
      fail_usage("volume grid " + std::to_string(v.n) + " does not match the dataset's " +
                 std::to_string(ds->ds.manifest.n));
    if (std::abs(v.voxel_size - ds->ds.manifest.pixel_size) > 1e-6 * v.voxel_size)
      fail_usage("volume voxel size does not match the dataset's pixel size");

    const double rho = c.get_double("rho", 0.1);
    const double sigma_t = c.get_double("sigma_t", 5.0);
    const double sigma =
        dataset_sigma_or_estimate(ds->ds, c.get_double("sigma", 0), c.get_double("particle_radius", 0));

    EvalOptions opts;
    opts.exhaustive_threshold = size_t(c.get_long("exhaustive_threshold", 100000));
    opts.s0 = c.get_double("s0", 100.0);
    opts.stamp_tau = c.get_long("stamp_tau", 250);
    opts.seed = uint64_t(c.get_long("seed", 0));

    const long eval_count = c.get_long("eval_count", 0);
    std::vector<Image> images = ds->ds.images;
    std::vector<CtfParams> ctfs = ds->ds.ctfs;
    if (eval_count > 0) {
      if (size_t(eval_count) > images.size())
        fail_usage("eval_count exceeds the dataset's image count");
      images.assign(ds->ds.images.end() - eval_count, ds->ds.images.end());
      ctfs.assign(ds->ds.ctfs.end() - eval_count, ds->ds.ctfs.end());
    }

    // the volume must share the images' exact pitch for slice extraction
    DensityVolume aligned = v;
    aligned.voxel_size = ds->ds.manifest.pixel_size;
    QuadratureScheme scheme = build_scheme(rho, aligned.n, aligned.voxel_size, sigma_t);
    EvalReport rep = evaluate_dataset(images, ctfs, aligned, scheme, sigma, opts);
    rep.rho = rho;
    rep.sigma = sigma;

    if (out_dir) {
      fs::create_directories(out_dir);
      write_eval_report((fs::path(out_dir) / "eval_report.txt").string(), rep, scheme);
      ConfigMap resolved;
      resolved.set("rho", fmt_double(rho));
      resolved.set("sigma_t", fmt_double(sigma_t));
      resolved.set("sigma", fmt_double(sigma));
      resolved.set("s0", fmt_double(opts.s0));
      resolved.set("exhaustive_threshold", std::to_string(opts.exhaustive_threshold));
      resolved.set("stamp_tau", std::to_string(opts.stamp_tau));
      resolved.set("seed", std::to_string(opts.seed));
      resolved.set("eval_count", std::to_string(eval_count));
      write_resolved(resolved, out_dir);
    }

    if (out) *out = new cf_report{std::move(rep)};
  });
}

cf_status cf_report_rremse(const cf_report* rep, double* out) {
  return guarded([&] {
    require(rep != nullptr && out != nullptr, "cf_report_rremse: null argument");
    *out = rep->rep.rremse;
  });
}

cf_status cf_report_image_count(const cf_report* rep, int64_t* out) {
  return guarded([&] {
    require(rep != nullptr && out != nullptr, "cf_report_image_count: null argument");
    *out = int64_t(rep->rep.per_image.size());
  });
}

cf_status cf_report_flagged_count(const cf_report* rep, int64_t* out) {
  return guarded([&] {
    require(rep != nullptr && out != nullptr, "cf_report_flagged_count: null argument");
    *out = int64_t(rep->rep.flagged_count);
  });
}

void cf_report_free(cf_report* rep) { delete rep; }

}  // extern "C"
