#include "io/manifest.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/types.hpp"
#include "io/config.hpp"
#include "io/mrc.hpp"
#include "io/tables.hpp"
#include "io/text.hpp"

namespace cryoforge {
namespace {

namespace fs = std::filesystem;

std::string resolve_against(const std::string& manifest_path, const std::string& ref) {
  if (ref.empty()) return ref;
  fs::path p(ref);
  if (p.is_absolute()) return ref;
  return (fs::path(manifest_path).parent_path() / p).string();
}

void require_exists(const std::string& path, const char* what) {
  if (!fs::exists(path))
    fail_data(std::string(what) + " referenced by the manifest does not exist: " + path);
}

}  // namespace

DatasetManifest read_manifest(const std::string& path) {
  if (!fs::exists(path)) fail_data("dataset manifest does not exist: " + path);
  ConfigMap cfg = ConfigMap::from_file(path);
  DatasetManifest m;
  m.stack_path = cfg.get_string("stack", "");
  m.ctf_path = cfg.get_string("ctf_table", "");
  m.truth_path = cfg.get_string("truth_table", "");
  m.n = int(cfg.get_long("n", 0));
  m.image_count = int(cfg.get_long("image_count", 0));
  m.pixel_size = cfg.get_double("pixel_size", 0);
  m.noise_sigma = cfg.get_double("noise_sigma", 0);
  m.signal_scale = cfg.get_double("signal_scale", 0);
  m.seed = uint64_t(cfg.get_long("seed", 0));
  if (m.stack_path.empty()) fail_data("manifest is missing the 'stack' entry: " + path);
  if (m.ctf_path.empty()) fail_data("manifest is missing the 'ctf_table' entry: " + path);
  if (m.n <= 0) fail_data("manifest is missing a positive 'n' entry: " + path);
  if (m.image_count <= 0) fail_data("manifest is missing a positive 'image_count' entry: " + path);
  if (!(m.pixel_size > 0)) fail_data("manifest is missing a positive 'pixel_size' entry: " + path);
  return m;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  ConfigMap cfg;
  cfg.set("stack", m.stack_path);
  cfg.set("ctf_table", m.ctf_path);
  if (!m.truth_path.empty()) cfg.set("truth_table", m.truth_path);
  cfg.set("n", std::to_string(m.n));
  cfg.set("image_count", std::to_string(m.image_count));
  cfg.set("pixel_size", fmt_double(m.pixel_size));
  if (m.noise_sigma > 0) cfg.set("noise_sigma", fmt_double(m.noise_sigma));
  if (m.signal_scale > 0) cfg.set("signal_scale", fmt_double(m.signal_scale));
  cfg.set("seed", std::to_string(m.seed));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot create manifest: " + path);
  out << cfg.render();
  out.flush();
  if (!out) fail_data("write error for manifest: " + path);
}

LoadedDataset load_dataset(const std::string& manifest_path) {
  LoadedDataset ds;
  ds.manifest = read_manifest(manifest_path);

  const std::string stack = resolve_against(manifest_path, ds.manifest.stack_path);
  const std::string ctf = resolve_against(manifest_path, ds.manifest.ctf_path);
  const std::string truth = resolve_against(manifest_path, ds.manifest.truth_path);
  require_exists(stack, "image stack");
  require_exists(ctf, "ctf table");
  if (!truth.empty()) require_exists(truth, "truth table");

  ds.images = read_mrc_stack(stack);
  ds.ctfs = read_ctf_table(ctf);
  if (!truth.empty()) ds.truth = read_truth_table(truth);

  if (ds.images.size() != size_t(ds.manifest.image_count))
    fail_data("stack holds " + std::to_string(ds.images.size()) + " images but the manifest says " +
              std::to_string(ds.manifest.image_count) + ": " + stack);
  if (ds.ctfs.size() != ds.images.size())
    fail_data("ctf table holds " + std::to_string(ds.ctfs.size()) + " rows for " +
              std::to_string(ds.images.size()) + " images: " + ctf);
  if (!ds.truth.empty() && ds.truth.size() != ds.images.size())
    fail_data("truth table holds " + std::to_string(ds.truth.size()) + " rows for " +
              std::to_string(ds.images.size()) + " images: " + truth);
  if (ds.images[0].n != ds.manifest.n)
    fail_data("stack image size " + std::to_string(ds.images[0].n) +
              " disagrees with the manifest's n=" + std::to_string(ds.manifest.n) + ": " + stack);
  if (std::abs(ds.images[0].pixel_size - ds.manifest.pixel_size) >
      1e-6 * ds.manifest.pixel_size)
    fail_data("stack pixel size disagrees with the manifest: " + stack);
  // trust the manifest's exact pixel size over the float32 header round trip
  for (Image& img : ds.images) img.pixel_size = ds.manifest.pixel_size;
  return ds;
}

std::string write_dataset(const std::string& directory, const SimulatedDataset& ds) {
  fs::create_directories(directory);
  const fs::path dir(directory);
  write_mrc_stack((dir / "images.mrcs").string(), ds.images);
  write_ctf_table((dir / "ctf.csv").string(), ds.ctfs);
  write_truth_table((dir / "truth.csv").string(), ds.truth);

  if (ds.images.empty()) fail_usage("cannot write an empty dataset");
  DatasetManifest m;
  m.stack_path = "images.mrcs";
  m.ctf_path = "ctf.csv";
  m.truth_path = "truth.csv";
  m.n = ds.images[0].n;
  m.image_count = int(ds.images.size());
  m.pixel_size = ds.images[0].pixel_size;
  m.noise_sigma = ds.noise_sigma;
  m.signal_scale = ds.signal_scale;
  m.seed = ds.config.seed;
  const std::string manifest_path = (dir / "dataset.manifest").string();
  write_manifest(manifest_path, m);
  return manifest_path;
}

void write_diagnostics_csv(const std::string& path, const std::vector<DiagRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot create diagnostics file: " + path);
  out << "iteration,rho,batch,mean_fraction_evaluated,mean_ess_directions,mean_ess_inplane,"
         "mean_ess_shifts,batch_nll,lipschitz,epsilon,epoch_kl,held_out_rremse,rho_event\n";
  for (const DiagRow& r : rows) {
    out << r.iteration << ',' << fmt_double(r.rho) << ',' << r.batch << ','
        << fmt_double(r.mean_fraction_evaluated) << ',' << fmt_double(r.mean_ess_directions)
        << ',' << fmt_double(r.mean_ess_inplane) << ',' << fmt_double(r.mean_ess_shifts) << ','
        << fmt_double(r.batch_nll) << ',' << fmt_double(r.lipschitz) << ','
        << fmt_double(r.epsilon) << ',' << fmt_optional(r.epoch_kl) << ','
        << fmt_optional(r.held_out_rremse) << ',' << r.rho_event << "\n";
  }
  out.flush();
  if (!out) fail_data("write error for diagnostics file: " + path);
}

void write_eval_report(const std::string& path, const EvalReport& report,
                       const QuadratureScheme& scheme) {
  if (report.direction_marginal.size() != scheme.directions.points.size())
    fail_usage("evaluation report does not belong to this quadrature scheme");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot create evaluation report: " + path);
  out << "cryoforge-eval-report v1\n";
  out << "rremse=" << fmt_double(report.rremse) << "\n";
  out << "rho=" << fmt_double(report.rho) << "\n";
  out << "sigma=" << fmt_double(report.sigma) << "\n";
  out << "images=" << report.per_image.size() << "\n";
  out << "flagged=" << report.flagged_count << "\n";
  out << "mean_fraction_evaluated=" << fmt_double(report.mean_fraction_evaluated) << "\n";
  out << "\n[per_image]\n";
  out << "index,emse,log_marginal,fraction_evaluated,flagged\n";
  for (size_t i = 0; i < report.per_image.size(); ++i) {
    const ImageEval& e = report.per_image[i];
    out << i << ',' << fmt_double(e.emse) << ',' << fmt_double(e.log_marginal) << ','
        << fmt_double(e.fraction_evaluated) << ',' << (e.flagged ? 1 : 0) << "\n";
  }
  out << "\n[direction_marginal]\n";
  out << "index,dir_x,dir_y,dir_z,probability\n";
  for (size_t d = 0; d < report.direction_marginal.size(); ++d) {
    const Vec3& p = scheme.directions.points[d];
    out << d << ',' << fmt_double(p.x) << ',' << fmt_double(p.y) << ',' << fmt_double(p.z) << ','
        << fmt_double(report.direction_marginal[d]) << "\n";
  }
  out.flush();
  if (!out) fail_data("write error for evaluation report: " + path);
}

}  // namespace cryoforge
