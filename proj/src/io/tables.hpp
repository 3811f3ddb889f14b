#pragma once

#include <string>
#include <vector>

#include "core/imaging.hpp"
#include "core/simulator.hpp"

namespace cryoforge {

/**
 * Plain-CSV side tables. Parsing is strict and locale-independent: every cell
 * must be a complete number (no trailing junk, no locale decimal commas), the
 * header row must match exactly, and errors carry the 1-based line number.
 */

/**
 * Per-image CTF table with header
 *   index,defocus_A,cs_mm,kv,amp_contrast,bfactor_A2
 * The index column must cover 0..K-1 exactly (any order, no duplicates) and
 * rows are returned sorted by index. Defocus must be positive.
 */
std::vector<CtfParams> read_ctf_table(const std::string& path);
void write_ctf_table(const std::string& path, const std::vector<CtfParams>& ctfs);

/**
 * Ground-truth sidecar written by the simulator, header
 *   index,qw,qx,qy,qz,shift_x_A,shift_y_A,defocus_A
 * Quaternions are unit rotations; shifts are in Angstrom.
 */
std::vector<TrueLatents> read_truth_table(const std::string& path);
void write_truth_table(const std::string& path, const std::vector<TrueLatents>& truth);

}  // namespace cryoforge
