#include "io/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/types.hpp"

namespace cryoforge {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

constexpr char kMagic[5] = {'C', 'F', 'R', 'G', '1'};
constexpr uint32_t kVersion = 1;

struct Writer {
  std::ofstream out;
  const std::string& path;

  void raw(const void* p, size_t bytes) {
    out.write(reinterpret_cast<const char*>(p), std::streamsize(bytes));
    if (!out) fail_data("write error for checkpoint: " + path);
  }
  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void i64(int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    if (!v.empty()) raw(v.data(), v.size() * 8);
  }
  void ints(const std::vector<int>& v) {
    u64(v.size());
    for (int x : v) {
      int64_t w = x;
      raw(&w, 8);
    }
  }
};

struct Reader {
  std::ifstream in;
  const std::string& path;

  void raw(void* p, size_t bytes) {
    in.read(reinterpret_cast<char*>(p), std::streamsize(bytes));
    if (in.gcount() != std::streamsize(bytes))
      fail_data("checkpoint truncated or unreadable: " + path);
  }
  uint8_t u8() {
    uint8_t v;
    raw(&v, 1);
    return v;
  }
  uint32_t u32() {
    uint32_t v;
    raw(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    raw(&v, 8);
    return v;
  }
  int64_t i64() {
    int64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  uint64_t count(uint64_t cap) {
    uint64_t c = u64();
    if (c > cap) fail_data("checkpoint holds an implausible element count: " + path);
    return c;
  }
  std::vector<double> doubles(uint64_t cap = uint64_t(1) << 33) {
    std::vector<double> v(count(cap));
    if (!v.empty()) raw(v.data(), v.size() * 8);
    return v;
  }
  std::vector<int> ints(uint64_t cap = uint64_t(1) << 33) {
    std::vector<int> v(count(cap));
    for (auto& x : v) {
      int64_t w = i64();
      x = int(w);
    }
    return v;
  }
};

void put_factor(Writer& w, const FactorState& f) {
  w.ints(f.indices);
  w.doubles(f.log_phi);
}

FactorState get_factor(Reader& r) {
  FactorState f;
  f.indices = r.ints();
  f.log_phi = r.doubles();
  if (f.indices.size() != f.log_phi.size())
    fail_data("checkpoint factor state is inconsistent: " + r.path);
  return f;
}

}  // namespace

void write_checkpoint(const std::string& path, const ReconState& st) {
  Writer w{std::ofstream(path, std::ios::binary | std::ios::trunc), path};
  if (!w.out) fail_data("cannot create checkpoint: " + path);
  w.raw(kMagic, 5);
  w.u32(kVersion);

  w.u32(uint32_t(st.n));
  w.f64(st.voxel_size);
  w.u32(uint32_t(st.image_count));
  w.u32(uint32_t(st.batch_count));
  w.u64(st.seed);
  w.f64(st.sigma);
  w.u32(st.scheme_generation);
  w.f64(st.last_rremse);

  w.doubles(st.sagd.v);
  w.u64(st.sagd.grad_memory.size());
  for (const auto& g : st.sagd.grad_memory) w.doubles(g);
  w.doubles(st.sagd.running_sum);
  w.f64(st.sagd.lipschitz);
  w.i64(st.sagd.tau);
  w.u8(st.sagd.force_line_search ? 1 : 0);
  w.u64(st.sagd.order_seed);
  w.f64(st.sagd.last_sync_drift);

  w.f64(st.rho.rho);
  w.u64(st.rho.history.size());
  for (const auto& [t, e] : st.rho.history) {
    w.i64(t);
    w.f64(e);
  }

  w.doubles(st.prev_direction_marginal);

  w.u64(st.states.size());
  for (const ImportanceState& s : st.states) {
    put_factor(w, s.directions);
    put_factor(w, s.inplanes);
    put_factor(w, s.shifts);
    w.i64(s.last_seen_iteration);
    w.i64(s.scheme_generation);
  }

  w.out.flush();
  if (!w.out) fail_data("write error for checkpoint: " + path);
}

ReconState read_checkpoint(const std::string& path) {
  Reader r{std::ifstream(path, std::ios::binary), path};
  if (!r.in) fail_data("cannot open checkpoint: " + path);
  char magic[5];
  r.raw(magic, 5);
  if (std::memcmp(magic, kMagic, 5) != 0)
    fail_data("not a checkpoint file (bad magic): " + path);
  uint32_t version = r.u32();
  if (version != kVersion)
    fail_data("unsupported checkpoint version " + std::to_string(version) + ": " + path);

  ReconState st;
  st.n = int(r.u32());
  st.voxel_size = r.f64();
  st.image_count = int(r.u32());
  st.batch_count = int(r.u32());
  st.seed = r.u64();
  st.sigma = r.f64();
  st.scheme_generation = r.u32();
  st.last_rremse = r.f64();

  st.sagd.v = r.doubles();
  st.sagd.grad_memory.resize(r.count(1 << 20));
  for (auto& g : st.sagd.grad_memory) g = r.doubles();
  st.sagd.running_sum = r.doubles();
  st.sagd.lipschitz = r.f64();
  st.sagd.tau = r.i64();
  st.sagd.force_line_search = r.u8() != 0;
  st.sagd.order_seed = r.u64();
  st.sagd.last_sync_drift = r.f64();

  st.rho.rho = r.f64();
  st.rho.history.resize(r.count(1 << 24));
  for (auto& [t, e] : st.rho.history) {
    t = r.i64();
    e = r.f64();
  }

  st.prev_direction_marginal = r.doubles();

  st.states.resize(r.count(1 << 26));
  for (ImportanceState& s : st.states) {
    s.directions = get_factor(r);
    s.inplanes = get_factor(r);
    s.shifts = get_factor(r);
    s.last_seen_iteration = long(r.i64());
    s.scheme_generation = int(r.i64());
  }

  if (st.sagd.v.size() != size_t(st.n) * st.n * st.n)
    fail_data("checkpoint volume size disagrees with its grid: " + path);
  if (st.states.size() != size_t(st.image_count))
    fail_data("checkpoint state count disagrees with its image count: " + path);
  return st;
}

}  // namespace cryoforge
