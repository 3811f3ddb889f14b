// cryoforge command-line front end. Everything goes through the public C API
// in cryoforge.h; this translation unit never touches the engine's internals.
//
//   cryoforge simulate OUT_DIR [--config FILE] [--key value ...]
//   cryoforge reconstruct MANIFEST OUT_DIR [--config FILE] [--key value ...]
//   cryoforge evaluate VOLUME MANIFEST [--out DIR] [--config FILE] [--key value ...]
//   cryoforge info PATH
//
// Unrecognized --key flags become configuration entries (dashes map to
// underscores), so every engine knob is reachable without a config file.
// The process exit code is the cf_status value of the failing call.

#include <cryoforge.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

namespace {

struct ConfigDeleter {
  void operator()(cf_config* c) const { cf_config_free(c); }
};
struct DatasetDeleter {
  void operator()(cf_dataset* d) const { cf_dataset_free(d); }
};
struct VolumeDeleter {
  void operator()(cf_volume* v) const { cf_volume_free(v); }
};
struct ReportDeleter {
  void operator()(cf_report* r) const { cf_report_free(r); }
};

using ConfigPtr = std::unique_ptr<cf_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<cf_dataset, DatasetDeleter>;
using VolumePtr = std::unique_ptr<cf_volume, VolumeDeleter>;
using ReportPtr = std::unique_ptr<cf_report, ReportDeleter>;

int fail(cf_status status) {
  std::cerr << "error: " << cf_last_error() << "\n";
  return int(status);
}

// Loads --config (when given) and layers the free-form --key value overrides
// on top. Returns a null handle after printing an error.
ConfigPtr build_config(const std::string& config_path, const std::vector<std::string>& extras,
                       int& exit_code) {
  cf_config* raw = nullptr;
  cf_status st = config_path.empty() ? cf_config_new(&raw) : cf_config_load(config_path.c_str(), &raw);
  if (st != CF_OK) {
    exit_code = fail(st);
    return nullptr;
  }
  ConfigPtr cfg(raw);

  for (size_t i = 0; i < extras.size(); ++i) {
    std::string tok = extras[i];
    if (tok.rfind("--", 0) != 0) {
      std::cerr << "error: unexpected argument '" << tok << "' (options look like --key value)\n";
      exit_code = int(CF_ERR_USAGE);
      return nullptr;
    }
    tok.erase(0, 2);
    std::string key, value;
    const size_t eq = tok.find('=');
    if (eq != std::string::npos) {
      key = tok.substr(0, eq);
      value = tok.substr(eq + 1);
    } else {
      key = tok;
      if (i + 1 >= extras.size() || extras[i + 1].rfind("--", 0) == 0) {
        std::cerr << "error: option '--" << key << "' needs a value\n";
        exit_code = int(CF_ERR_USAGE);
        return nullptr;
      }
      value = extras[++i];
    }
    for (char& ch : key) {
      if (ch == '-') ch = '_';
    }
    if (cf_status rc = cf_config_set(cfg.get(), key.c_str(), value.c_str()); rc != CF_OK) {
      exit_code = fail(rc);
      return nullptr;
    }
  }
  exit_code = 0;
  return cfg;
}

DatasetPtr open_dataset(const std::string& manifest, int& exit_code) {
  cf_dataset* raw = nullptr;
  if (cf_status rc = cf_dataset_open(manifest.c_str(), &raw); rc != CF_OK) {
    exit_code = fail(rc);
    return nullptr;
  }
  exit_code = 0;
  return DatasetPtr(raw);
}

int cmd_simulate(const std::string& out_dir, const ConfigPtr& cfg) {
  if (cf_status rc = cf_simulate(cfg.get(), out_dir.c_str()); rc != CF_OK) return fail(rc);
  std::cout << "dataset written to " << out_dir << "\n";
  return 0;
}

int cmd_reconstruct(const std::string& manifest, const std::string& out_dir,
                    const ConfigPtr& cfg) {
  int ec = 0;
  DatasetPtr ds = open_dataset(manifest, ec);
  if (!ds) return ec;

  cf_volume* raw = nullptr;
  if (cf_status rc = cf_reconstruct(ds.get(), cfg.get(), out_dir.c_str(), &raw); rc != CF_OK)
    return fail(rc);
  VolumePtr vol(raw);

  std::cout << "volume written to " << out_dir << "/volume.mrc\n";
  std::ifstream summary(out_dir + "/run.summary");
  for (std::string line; std::getline(summary, line);) std::cout << line << "\n";
  return 0;
}

int cmd_evaluate(const std::string& volume_path, const std::string& manifest,
                 const std::string& out_dir, const ConfigPtr& cfg) {
  cf_volume* vraw = nullptr;
  if (cf_status rc = cf_volume_read_mrc(volume_path.c_str(), &vraw); rc != CF_OK) return fail(rc);
  VolumePtr vol(vraw);

  int ec = 0;
  DatasetPtr ds = open_dataset(manifest, ec);
  if (!ds) return ec;

  cf_report* rraw = nullptr;
  if (cf_status rc = cf_evaluate(vol.get(), ds.get(), cfg.get(),
                                 out_dir.empty() ? nullptr : out_dir.c_str(), &rraw);
      rc != CF_OK)
    return fail(rc);
  ReportPtr rep(rraw);

  double rremse = 0;
  int64_t images = 0, flagged = 0;
  if (cf_status rc = cf_report_rremse(rep.get(), &rremse); rc != CF_OK) return fail(rc);
  if (cf_status rc = cf_report_image_count(rep.get(), &images); rc != CF_OK) return fail(rc);
  if (cf_status rc = cf_report_flagged_count(rep.get(), &flagged); rc != CF_OK) return fail(rc);
  std::cout << "images " << images << "\n"
            << "flagged " << flagged << "\n"
            << "rremse " << rremse << "\n";
  if (!out_dir.empty()) std::cout << "report written to " << out_dir << "/eval_report.txt\n";
  return 0;
}

int cmd_info(const std::string& path) {
  // Try the dataset manifest first, then fall back to a volume; report the
  // volume error if both fail and the name doesn't look like a manifest.
  cf_dataset* draw = nullptr;
  if (cf_dataset_open(path.c_str(), &draw) == CF_OK) {
    DatasetPtr ds(draw);
    int64_t count = 0;
    int32_t n = 0;
    double px = 0, sigma = 0;
    cf_dataset_image_count(ds.get(), &count);
    cf_dataset_image_size(ds.get(), &n);
    cf_dataset_pixel_size(ds.get(), &px);
    cf_dataset_noise_sigma(ds.get(), &sigma);
    std::cout << "kind dataset\n"
              << "images " << count << "\n"
              << "box " << n << "\n"
              << "pixel_size " << px << "\n";
    if (sigma > 0) std::cout << "noise_sigma " << sigma << "\n";
    return 0;
  }
  const std::string dataset_error = cf_last_error();

  cf_volume* vraw = nullptr;
  if (cf_status rc = cf_volume_read_mrc(path.c_str(), &vraw); rc != CF_OK) {
    if (path.size() > 9 && path.compare(path.size() - 9, 9, ".manifest") == 0) {
      std::cerr << "error: " << dataset_error << "\n";
      return int(CF_ERR_DATA);
    }
    return fail(rc);
  }
  VolumePtr vol(vraw);
  int32_t n = 0;
  double voxel = 0, lo = 0, hi = 0, mean = 0;
  cf_volume_size(vol.get(), &n);
  cf_volume_voxel_size(vol.get(), &voxel);
  cf_volume_stats(vol.get(), &lo, &hi, &mean);
  std::cout << "kind volume\n"
            << "box " << n << "\n"
            << "voxel_size " << voxel << "\n"
            << "min " << lo << "\n"
            << "max " << hi << "\n"
            << "mean " << mean << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cryoforge: single-particle simulation, reconstruction, and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cf_version()));

  std::string sim_out, sim_config;
  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic particle dataset");
  sim->add_option("out_dir", sim_out, "output directory")->required();
  sim->add_option("--config", sim_config, "key=value configuration file");
  sim->allow_extras();

  std::string rec_manifest, rec_out, rec_config;
  CLI::App* rec = app.add_subcommand("reconstruct", "reconstruct a volume from a dataset");
  rec->add_option("manifest", rec_manifest, "dataset manifest path")->required();
  rec->add_option("out_dir", rec_out, "output directory")->required();
  rec->add_option("--config", rec_config, "key=value configuration file");
  rec->allow_extras();

  std::string ev_volume, ev_manifest, ev_out, ev_config;
  CLI::App* ev = app.add_subcommand("evaluate", "score a volume against a dataset");
  ev->add_option("volume", ev_volume, "volume MRC path")->required();
  ev->add_option("manifest", ev_manifest, "dataset manifest path")->required();
  ev->add_option("--out", ev_out, "optional report directory");
  ev->add_option("--config", ev_config, "key=value configuration file");
  ev->allow_extras();

  std::string info_path;
  CLI::App* info = app.add_subcommand("info", "describe a dataset manifest or MRC volume");
  info->add_option("path", info_path, "manifest or volume path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // help/version exit 0; every other parse problem is a usage error
    return app.exit(e) == 0 ? 0 : int(CF_ERR_USAGE);
  }

  if (sim->parsed()) {
    int ec = 0;
    ConfigPtr cfg = build_config(sim_config, sim->remaining(), ec);
    return cfg ? cmd_simulate(sim_out, cfg) : ec;
  }
  if (rec->parsed()) {
    int ec = 0;
    ConfigPtr cfg = build_config(rec_config, rec->remaining(), ec);
    return cfg ? cmd_reconstruct(rec_manifest, rec_out, cfg) : ec;
  }
  if (ev->parsed()) {
    int ec = 0;
    ConfigPtr cfg = build_config(ev_config, ev->remaining(), ec);
    return cfg ? cmd_evaluate(ev_volume, ev_manifest, ev_out, cfg) : ec;
  }
  return cmd_info(info_path);
}
