#pragma once

#include <string>

#include "core/reconstruct.hpp"

namespace cryoforge {

/**
 * Versioned binary checkpoint ("CFRG1" magic) holding the complete optimizer
 * state: the volume iterate, gradient memories, per-image quadrature evidence
 * for training and held-out images, the resolution schedule, and the seed.
 * A run resumed from a checkpoint replays bit for bit what the uninterrupted
 * run would have produced. Little-endian fixed-width fields; truncated or
 * mismatched files are rejected with a data error.
 */

void write_checkpoint(const std::string& path, const ReconState& state);
ReconState read_checkpoint(const std::string& path);

}  // namespace cryoforge
