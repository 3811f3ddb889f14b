#pragma once

#include <string>
#include <vector>

#include "core/evaluation.hpp"
#include "core/reconstruct.hpp"
#include "core/simulator.hpp"

namespace cryoforge {

/**
 * Dataset manifest: a flat key=value file tying together the image stack, the
 * CTF table, the optional ground-truth sidecar, and the provenance (seed,
 * noise level) of a dataset. Relative paths are resolved against the
 * manifest's own directory.
 */
struct DatasetManifest {
  std::string stack_path;
  std::string ctf_path;
  std::string truth_path;  // empty when no ground truth is available
  int n = 0;
  int image_count = 0;
  double pixel_size = 0;
  double noise_sigma = 0;   // 0 = unknown
  double signal_scale = 0;  // 0 = unknown
  uint64_t seed = 0;        // seed the dataset was generated with (provenance)
};

DatasetManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const DatasetManifest& m);

/** Everything a manifest references, loaded and cross-validated: the stack
 *  and CTF row counts must both equal the manifest's image count, and the
 *  grid/pixel size must match the stack header. */
struct LoadedDataset {
  std::vector<Image> images;
  std::vector<CtfParams> ctfs;
  std::vector<TrueLatents> truth;  // empty when the manifest names none
  DatasetManifest manifest;
};

LoadedDataset load_dataset(const std::string& manifest_path);

/** Writes a simulated dataset (stack, ctf table, truth sidecar, manifest)
 *  into a directory; returns the manifest path. */
std::string write_dataset(const std::string& directory, const SimulatedDataset& ds);

/** Per-iteration diagnostics CSV. Columns with no value on a row (epoch KL,
 *  held-out error) are left empty. */
void write_diagnostics_csv(const std::string& path, const std::vector<DiagRow>& rows);

/** Versioned plain-text evaluation report: scalar key=value lines followed by
 *  per-image and direction-marginal CSV sections. */
void write_eval_report(const std::string& path, const EvalReport& report,
                       const QuadratureScheme& scheme);

}  // namespace cryoforge
