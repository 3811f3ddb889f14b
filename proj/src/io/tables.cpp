#include "io/tables.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <string_view>

#include "core/types.hpp"

namespace cryoforge {
namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open table: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

[[noreturn]] void cell_error(const std::string& path, size_t line_no, const char* column,
                             std::string_view cell) {
  fail_data(path + " line " + std::to_string(line_no) + ": column '" + column +
            "' is not a valid number: '" + std::string(cell) + "'");
}

double parse_double(std::string_view cell, const std::string& path, size_t line_no,
                    const char* column) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
    cell_error(path, line_no, column, cell);
  return v;
}

long parse_index(std::string_view cell, const std::string& path, size_t line_no) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || v < 0)
    cell_error(path, line_no, "index", cell);
  return v;
}

// Shortest round-trip decimal rendering, independent of any locale.
std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

constexpr const char* kCtfHeader = "index,defocus_A,cs_mm,kv,amp_contrast,bfactor_A2";
constexpr const char* kTruthHeader = "index,qw,qx,qy,qz,shift_x_A,shift_y_A,defocus_A";

// Checks the header, walks the data rows, and hands each (line_no, cells) to
// `row`. Ensures the index column covers 0..K-1 exactly.
template <typename RowFn>
size_t walk_table(const std::string& path, const char* header, size_t columns, RowFn&& row) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) fail_data("empty table: " + path);
  if (lines[0] != header)
    fail_data(path + " line 1: expected header '" + header + "', got '" + lines[0] + "'");
  const size_t count = lines.size() - 1;
  std::vector<char> seen(count, 0);
  for (size_t r = 1; r < lines.size(); ++r) {
    const size_t line_no = r + 1;
    std::vector<std::string_view> cells = split_csv(lines[r]);
    if (cells.size() != columns)
      fail_data(path + " line " + std::to_string(line_no) + ": expected " +
                std::to_string(columns) + " comma-separated values, got " +
                std::to_string(cells.size()));
    long idx = parse_index(cells[0], path, line_no);
    if (idx >= long(count))
      fail_data(path + " line " + std::to_string(line_no) + ": index " + std::to_string(idx) +
                " out of range for " + std::to_string(count) + " rows");
    if (seen[size_t(idx)])
      fail_data(path + " line " + std::to_string(line_no) + ": duplicate index " +
                std::to_string(idx));
    seen[size_t(idx)] = 1;
    row(line_no, size_t(idx), cells);
  }
  return count;
}

}  // namespace

std::vector<CtfParams> read_ctf_table(const std::string& path) {
  std::vector<CtfParams> ctfs;
  walk_table(path, kCtfHeader, 6, [&](size_t line_no, size_t idx,
                                      const std::vector<std::string_view>& cells) {
    if (ctfs.size() <= idx) ctfs.resize(idx + 1);
    CtfParams c;
    c.defocus_a = parse_double(cells[1], path, line_no, "defocus_A");
    c.spherical_aberration_mm = parse_double(cells[2], path, line_no, "cs_mm");
    c.voltage_kv = parse_double(cells[3], path, line_no, "kv");
    c.amplitude_contrast = parse_double(cells[4], path, line_no, "amp_contrast");
    c.envelope_b_factor = parse_double(cells[5], path, line_no, "bfactor_A2");
    if (!(c.defocus_a > 0))
      fail_data(path + " line " + std::to_string(line_no) + ": defocus must be positive, got " +
                std::string(cells[1]));
    try {
      c.check();
    } catch (const Error& e) {
      fail_data(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    ctfs[idx] = c;
  });
  return ctfs;
}

void write_ctf_table(const std::string& path, const std::vector<CtfParams>& ctfs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot create table: " + path);
  out << kCtfHeader << "\n";
  for (size_t i = 0; i < ctfs.size(); ++i) {
    const CtfParams& c = ctfs[i];
    out << i << ',' << fmt(c.defocus_a) << ',' << fmt(c.spherical_aberration_mm) << ','
        << fmt(c.voltage_kv) << ',' << fmt(c.amplitude_contrast) << ','
        << fmt(c.envelope_b_factor) << "\n";
  }
  out.flush();
  if (!out) fail_data("write error for table: " + path);
}

std::vector<TrueLatents> read_truth_table(const std::string& path) {
  std::vector<TrueLatents> truth;
  walk_table(path, kTruthHeader, 8, [&](size_t line_no, size_t idx,
                                        const std::vector<std::string_view>& cells) {
    if (truth.size() <= idx) truth.resize(idx + 1);
    TrueLatents t;
    t.quaternion.w = parse_double(cells[1], path, line_no, "qw");
    t.quaternion.x = parse_double(cells[2], path, line_no, "qx");
    t.quaternion.y = parse_double(cells[3], path, line_no, "qy");
    t.quaternion.z = parse_double(cells[4], path, line_no, "qz");
    const double sx = parse_double(cells[5], path, line_no, "shift_x_A");
    const double sy = parse_double(cells[6], path, line_no, "shift_y_A");
    t.defocus_a = parse_double(cells[7], path, line_no, "defocus_A");
    const double norm = std::sqrt(t.quaternion.w * t.quaternion.w + t.quaternion.x * t.quaternion.x +
                                  t.quaternion.y * t.quaternion.y + t.quaternion.z * t.quaternion.z);
    if (std::abs(norm - 1.0) > 1e-3)
      fail_data(path + " line " + std::to_string(line_no) + ": quaternion is not unit length");
    if (std::abs(norm - 1.0) > 1e-9) {  // real drift; don't disturb exact round trips
      t.quaternion.w /= norm;
      t.quaternion.x /= norm;
      t.quaternion.y /= norm;
      t.quaternion.z /= norm;
    }
    t.pose = rotation_to_pose(quaternion_to_rotation(t.quaternion));
    t.pose.shift = {sx, sy};
    truth[idx] = t;
  });
  return truth;
}

void write_truth_table(const std::string& path, const std::vector<TrueLatents>& truth) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot create table: " + path);
  out << kTruthHeader << "\n";
  for (size_t i = 0; i < truth.size(); ++i) {
    const TrueLatents& t = truth[i];
    out << i << ',' << fmt(t.quaternion.w) << ',' << fmt(t.quaternion.x) << ','
        << fmt(t.quaternion.y) << ',' << fmt(t.quaternion.z) << ',' << fmt(t.pose.shift.x) << ','
        << fmt(t.pose.shift.y) << ',' << fmt(t.defocus_a) << "\n";
  }
  out.flush();
  if (!out) fail_data("write error for table: " + path);
}

}  // namespace cryoforge
