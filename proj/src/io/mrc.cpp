#include "io/mrc.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/types.hpp"

namespace cryoforge {
namespace {

static_assert(std::endian::native == std::endian::little,
              "mrc io assumes a little-endian host");

constexpr size_t kHeaderBytes = 1024;

// byte offsets of the fields we touch (4-byte words)
constexpr size_t kNx = 0, kNy = 4, kNz = 8, kMode = 12;
constexpr size_t kMx = 28, kMy = 32, kMz = 36;
constexpr size_t kCellA = 40;  // three floats
constexpr size_t kCellB = 52;  // three floats
constexpr size_t kMapC = 64, kMapR = 68, kMapS = 72;
constexpr size_t kDmin = 76, kDmax = 80, kDmean = 84;
constexpr size_t kIspg = 88, kNsymbt = 92;
constexpr size_t kExtTyp = 104, kNversion = 108;
constexpr size_t kMagic = 208, kMachst = 212, kRms = 216, kNlabl = 220;

int32_t get_i32(const unsigned char* h, size_t off) {
  int32_t v;
  std::memcpy(&v, h + off, 4);
  return v;
}

float get_f32(const unsigned char* h, size_t off) {
  float v;
  std::memcpy(&v, h + off, 4);
  return v;
}

void put_i32(unsigned char* h, size_t off, int32_t v) { std::memcpy(h + off, &v, 4); }
void put_f32(unsigned char* h, size_t off, float v) { std::memcpy(h + off, &v, 4); }

struct Parsed {
  int nx = 0, ny = 0, nz = 0;
  double pitch = 0;  // Angstrom per sample along x
  std::vector<float> samples;
};

Parsed read_mrc(const std::string& path, bool want_volume, MrcExtras* extras) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open mrc file: " + path);
  in.seekg(0, std::ios::end);
  const uint64_t file_bytes = uint64_t(in.tellg());
  in.seekg(0, std::ios::beg);

  if (file_bytes < kHeaderBytes)
    fail_data("mrc file truncated: " + path + " holds " + std::to_string(file_bytes) +
              " bytes, smaller than the 1024-byte header");

  unsigned char h[kHeaderBytes];
  in.read(reinterpret_cast<char*>(h), kHeaderBytes);

  if (std::memcmp(h + kMagic, "MAP ", 4) != 0)
    fail_data("not an mrc2014 file (missing MAP magic): " + path);
  const unsigned char m0 = h[kMachst], m1 = h[kMachst + 1];
  if (m0 == 0x11 && m1 == 0x11)
    fail_data("big-endian mrc file not supported: " + path);
  if (m0 != 0x44)
    fail_data("unrecognized machine stamp in mrc file: " + path);
  const int32_t mode = get_i32(h, kMode);
  if (mode != 2)
    fail_data("unsupported mrc mode " + std::to_string(mode) + " (only mode 2 float32): " + path);

  Parsed p;
  p.nx = get_i32(h, kNx);
  p.ny = get_i32(h, kNy);
  p.nz = get_i32(h, kNz);
  const int32_t mx = get_i32(h, kMx), my = get_i32(h, kMy), mz = get_i32(h, kMz);
  if (p.nx <= 0 || p.ny <= 0 || p.nz <= 0 || mx <= 0)
    fail_data("non-positive dimensions in mrc file: " + path);
  if (p.nx != p.ny || p.nx % 2 != 0 || p.nx < 8)
    fail_data("grid must be square, even and at least 8 wide, got " + std::to_string(p.nx) +
              "x" + std::to_string(p.ny) + ": " + path);
  const int32_t ispg = get_i32(h, kIspg);
  if (want_volume) {
    if (p.nz != p.nx || mx != p.nx || my != p.ny || mz != p.nz)
      fail_data("mrc volume must be cubic with mx=my=mz=nx, got nx=" + std::to_string(p.nx) +
                " nz=" + std::to_string(p.nz) + " mx=" + std::to_string(mx) + ": " + path);
  } else {
    if (ispg != 0)
      fail_data("mrc file is not an image stack (ispg=" + std::to_string(ispg) + "): " + path);
    if (mx != p.nx || my != p.ny)
      fail_data("mrc stack sampling grid disagrees with image size: " + path);
  }

  const float cella_x = get_f32(h, kCellA);
  if (!(cella_x > 0)) fail_data("non-positive cell dimension in mrc file: " + path);
  p.pitch = double(cella_x) / double(mx);

  const int32_t nsymbt = get_i32(h, kNsymbt);
  if (nsymbt < 0) fail_data("negative extended-header size in mrc file: " + path);

  const uint64_t data_bytes = uint64_t(p.nx) * uint64_t(p.ny) * uint64_t(p.nz) * 4;
  const uint64_t expect = kHeaderBytes + uint64_t(nsymbt) + data_bytes;
  if (file_bytes < expect)
    fail_data("mrc file truncated: " + path + " holds " + std::to_string(file_bytes) +
              " bytes but the header promises " + std::to_string(expect));

  if (extras) {
    extras->extended.assign(size_t(nsymbt), 0);
    std::memcpy(extras->exttyp, h + kExtTyp, 4);
    if (nsymbt > 0) in.read(extras->extended.data(), nsymbt);
  } else if (nsymbt > 0) {
    in.seekg(nsymbt, std::ios::cur);
  }

  p.samples.resize(size_t(p.nx) * p.ny * p.nz);
  in.read(reinterpret_cast<char*>(p.samples.data()),
          std::streamsize(p.samples.size() * sizeof(float)));
  if (!in) fail_data("read error in mrc file: " + path);
  return p;
}

void write_mrc(const std::string& path, int nx, int ny, int nz, int mz, double pitch, int ispg,
               const std::vector<float>& samples, const MrcExtras* extras) {
  unsigned char h[kHeaderBytes];
  std::memset(h, 0, kHeaderBytes);
  put_i32(h, kNx, nx);
  put_i32(h, kNy, ny);
  put_i32(h, kNz, nz);
  put_i32(h, kMode, 2);
  put_i32(h, kMx, nx);
  put_i32(h, kMy, ny);
  put_i32(h, kMz, mz);
  put_f32(h, kCellA + 0, float(pitch * nx));
  put_f32(h, kCellA + 4, float(pitch * ny));
  put_f32(h, kCellA + 8, float(pitch * mz));
  for (int i = 0; i < 3; ++i) put_f32(h, kCellB + 4 * size_t(i), 90.0f);
  put_i32(h, kMapC, 1);
  put_i32(h, kMapR, 2);
  put_i32(h, kMapS, 3);
  put_i32(h, kIspg, ispg);
  put_i32(h, kNversion, 20140);
  std::memcpy(h + kMagic, "MAP ", 4);
  h[kMachst] = 0x44;
  h[kMachst + 1] = 0x44;
  put_i32(h, kNlabl, 0);

  double dmin = samples.empty() ? 0 : samples[0];
  double dmax = dmin, sum = 0, sum2 = 0;
  for (float s : samples) {
    dmin = std::min(dmin, double(s));
    dmax = std::max(dmax, double(s));
    sum += s;
    sum2 += double(s) * s;
  }
  const double mean = samples.empty() ? 0 : sum / double(samples.size());
  const double var = samples.empty() ? 0 : std::max(0.0, sum2 / double(samples.size()) - mean * mean);
  put_f32(h, kDmin, float(dmin));
  put_f32(h, kDmax, float(dmax));
  put_f32(h, kDmean, float(mean));
  put_f32(h, kRms, float(std::sqrt(var)));

  const size_t ext_bytes = extras ? extras->extended.size() : 0;
  put_i32(h, kNsymbt, int32_t(ext_bytes));
  if (extras) std::memcpy(h + kExtTyp, extras->exttyp, 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot create mrc file: " + path);
  out.write(reinterpret_cast<const char*>(h), kHeaderBytes);
  if (ext_bytes > 0) out.write(extras->extended.data(), std::streamsize(ext_bytes));
  out.write(reinterpret_cast<const char*>(samples.data()),
            std::streamsize(samples.size() * sizeof(float)));
  out.flush();
  if (!out) fail_data("write error for mrc file: " + path);
}

}  // namespace

DensityVolume read_mrc_volume(const std::string& path, MrcExtras* extras) {
  Parsed p = read_mrc(path, /*want_volume=*/true, extras);
  DensityVolume v(p.nx, p.pitch);
  for (size_t i = 0; i < p.samples.size(); ++i) v.data[i] = double(p.samples[i]);
  return v;
}

void write_mrc_volume(const std::string& path, const DensityVolume& volume,
                      const MrcExtras* extras) {
  DensityVolume::check_dims(volume.n);
  if (volume.data.size() != size_t(volume.n) * volume.n * volume.n)
    fail_usage("volume buffer size disagrees with its dimensions");
  std::vector<float> samples(volume.data.size());
  for (size_t i = 0; i < samples.size(); ++i) samples[i] = float(volume.data[i]);
  write_mrc(path, volume.n, volume.n, volume.n, volume.n, volume.voxel_size, 1, samples, extras);
}

std::vector<Image> read_mrc_stack(const std::string& path, MrcExtras* extras) {
  Parsed p = read_mrc(path, /*want_volume=*/false, extras);
  std::vector<Image> images(size_t(p.nz));
  const size_t per = size_t(p.nx) * p.ny;
  for (size_t k = 0; k < images.size(); ++k) {
    Image img(p.nx, p.pitch);
    for (size_t i = 0; i < per; ++i) img.data[i] = double(p.samples[k * per + i]);
    images[k] = std::move(img);
  }
  return images;
}

void write_mrc_stack(const std::string& path, const std::vector<Image>& images,
                     const MrcExtras* extras) {
  if (images.empty()) fail_usage("cannot write an empty image stack");
  const int n = images[0].n;
  const double px = images[0].pixel_size;
  std::vector<float> samples(size_t(n) * n * images.size());
  for (size_t k = 0; k < images.size(); ++k) {
    const Image& img = images[k];
    if (img.n != n || img.pixel_size != px)
      fail_usage("all images in a stack must share size and pixel size");
    if (img.data.size() != size_t(n) * n)
      fail_usage("image buffer size disagrees with its dimensions");
    for (size_t i = 0; i < img.data.size(); ++i)
      samples[k * size_t(n) * n + i] = float(img.data[i]);
  }
  write_mrc(path, n, n, int(images.size()), 1, px, 0, samples, extras);
}

}  // namespace cryoforge
