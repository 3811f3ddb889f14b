#pragma once

#include <string>
#include <vector>

#include "core/grid.hpp"

namespace cryoforge {

/**
 * MRC2014 reader/writer, mode 2 (float32), little-endian files only.
 *
 * Volumes are written with ispg=1 and cubic dimensions; image stacks with
 * ispg=0, mz=1 and nz = number of images. The physical pitch in Angstrom is
 * cella.x / mx. Files that are big-endian, non-mode-2, or shorter than the
 * header promises are rejected with a descriptive error.
 */

/** Extended-header bytes between the 1024-byte header and the data block,
 *  preserved verbatim across a read/write round trip, together with the
 *  EXTTYP tag that names their layout. */
struct MrcExtras {
  std::vector<char> extended;
  char exttyp[4] = {0, 0, 0, 0};
};

DensityVolume read_mrc_volume(const std::string& path, MrcExtras* extras = nullptr);
void write_mrc_volume(const std::string& path, const DensityVolume& volume,
                      const MrcExtras* extras = nullptr);

std::vector<Image> read_mrc_stack(const std::string& path, MrcExtras* extras = nullptr);
void write_mrc_stack(const std::string& path, const std::vector<Image>& images,
                     const MrcExtras* extras = nullptr);

}  // namespace cryoforge
