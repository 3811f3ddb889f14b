#include "core/imaging.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <vector>

#include "core/fft.hpp"

namespace cryoforge {

namespace {

double sinc(double t) {
  double a = kPi * t;
  if (std::abs(a) < 1e-4) return 1.0 - a * a / 6.0;
  return std::sin(a) / a;
}

double kaiser(double s, double beta) {
  // s = t / (footprint/2) in [-1, 1]
  double arg = 1.0 - s * s;
  if (arg <= 0.0) return arg == 0.0 ? 1.0 / std::cyl_bessel_i(0.0, beta) : 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(arg)) / std::cyl_bessel_i(0.0, beta);
}

double kernel_direct(double t, int footprint, double beta) {
  double half = footprint / 2.0;
  if (std::abs(t) >= half) return 0.0;
  double r = std::round(t);
  if (r != 0.0 && std::abs(t - r) < 1e-12) return 0.0;  // exact interpolation property
  return sinc(t) * kaiser(t / half, beta);
}

// Dense sample table of the 1D kernel for the hot path. Node spacing divides
// 1 exactly, so integer offsets land on nodes and on-lattice interpolation
// stays exact.
struct KernelTable {
  static constexpr int kPerUnit = 4096;
  int footprint = 0;
  double beta = 0;
  std::vector<double> values;  // t = i / kPerUnit, i in [0, footprint/2 * kPerUnit]

  double eval(double t) const {
    double a = std::abs(t) * kPerUnit;
    int i = int(a);
    if (i + 1 >= int(values.size())) return 0.0;
    double frac = a - i;
    return values[i] + frac * (values[i + 1] - values[i]);
  }
};

const KernelTable& kernel_table(const InterpKernel& k) {
  static std::mutex mu;
  static std::map<std::pair<int, long long>, KernelTable> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(k.footprint, (long long)std::llround(k.beta * 1e9));
  auto it = cache.find(key);
  if (it == cache.end()) {
    KernelTable t;
    t.footprint = k.footprint;
    t.beta = k.beta;
    int count = k.footprint / 2 * KernelTable::kPerUnit + 1;
    t.values.resize(count + 1, 0.0);
    for (int i = 0; i < count; ++i)
      t.values[i] = kernel_direct(double(i) / KernelTable::kPerUnit, k.footprint, k.beta);
    it = cache.emplace(key, std::move(t)).first;
  }
  return it->second;
}

inline int wrap_index(int k, int n) {
  int m = (k + n / 2) % n;
  return m < 0 ? m + n : m;
}

// Per-axis interpolation footprint at fractional coordinate u: `footprint`
// consecutive lattice indices starting at floor(u) - footprint/2 + 1.
struct AxisWeights {
  int first = 0;
  double w[16];
};

AxisWeights axis_weights(double u, const KernelTable& table) {
  AxisWeights a;
  a.first = int(std::floor(u)) - table.footprint / 2 + 1;
  for (int j = 0; j < table.footprint; ++j) a.w[j] = table.eval(u - (a.first + j));
  return a;
}

void check_slice_args(const FourierVolume& vol, const DiskLattice& lattice,
                      const InterpKernel& kernel) {
  kernel.check();
  if (vol.n <= 0) fail_usage("extract_slice: empty volume");
  if (std::abs(lattice.pixel_size - vol.voxel_size) > 1e-9 * vol.voxel_size)
    fail_usage("extract_slice: lattice pixel size does not match volume voxel size");
  if (lattice.n > vol.n) fail_usage("extract_slice: lattice finer than volume grid");
  if (lattice.rho > vol.nyquist() * (1 + 1e-12))
    fail_usage("extract_slice: cutoff above volume Nyquist");
}

}  // namespace

void InterpKernel::check() const {
  if (footprint < 2 || footprint > 16 || footprint % 2 != 0)
    fail_usage("interpolation footprint must be even and in [2, 16]");
  if (!(beta > 0) || beta > 64) fail_usage("kernel beta must be in (0, 64]");
}

double InterpKernel::operator()(double t) const { return kernel_direct(t, footprint, beta); }

double InterpKernel::transform(double xi) const {
  check();
  // 2 * integral_0^{W/2} K(t) cos(2 pi t xi) dt by composite Simpson.
  const int m = 2048;  // intervals (even)
  double half = footprint / 2.0;
  double h = half / m;
  double acc = 0.0;
  for (int i = 0; i <= m; ++i) {
    double t = i * h;
    double f = kernel_direct(t, footprint, beta) * std::cos(2 * kPi * t * xi);
    double c = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += c * f;
  }
  return 2.0 * acc * h / 3.0;
}

PreparedVolume prepare_projection_volume(const DensityVolume& vol, const InterpKernel& kernel,
                                         int pad_factor) {
  kernel.check();
  DensityVolume::check_dims(vol.n);
  if (pad_factor < 1 || pad_factor > 8) fail_usage("pad factor must be in [1, 8]");

  int n = vol.n;
  int m = n * pad_factor;
  int cn = n / 2, cm = m / 2;

  // 1D deapodization profile over the occupied window: 1 / kappa((x - c)/M).
  std::vector<double> inv_apod(n);
  double kappa0 = kernel.transform(0.0);
  for (int x = 0; x < n; ++x) {
    double kap = kernel.transform(double(x - cn) / m);
    if (!(kap > 1e-6 * kappa0))
      fail_numeric("interpolation kernel transform vanishes inside the sampling window");
    inv_apod[x] = 1.0 / kap;
  }

  DensityVolume padded(m, vol.voxel_size);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y) {
      double wzy = inv_apod[z] * inv_apod[y];
      for (int x = 0; x < n; ++x)
        padded.at(x - cn + cm, y - cn + cm, z - cn + cm) = vol.at(x, y, z) * wzy * inv_apod[x];
    }

  PreparedVolume out;
  out.spectrum = fft3(padded);
  out.source_n = n;
  out.kernel = kernel;
  out.scale = vol.voxel_size * std::pow(double(m), 1.5) / n;
  out.inv_apod = std::move(inv_apod);
  return out;
}

FourierImage extract_slice(const FourierVolume& vol, const Mat3& rot,
                           const std::shared_ptr<const DiskLattice>& lattice,
                           const InterpKernel& kernel) {
  check_slice_args(vol, *lattice, kernel);
  const KernelTable& table = kernel_table(kernel);
  const int w = kernel.footprint;
  const int n = vol.n;
  const double g = double(vol.n) / lattice->n;

  FourierImage out(lattice);
  for (size_t s = 0; s < lattice->sites.size(); ++s) {
    const auto& site = lattice->sites[s];
    Vec3 u = rot.tmul({site.kx * g, site.ky * g, 0.0});
    AxisWeights ax = axis_weights(u.x, table);
    AxisWeights ay = axis_weights(u.y, table);
    AxisWeights az = axis_weights(u.z, table);
    cplx acc(0, 0);
    for (int k = 0; k < w; ++k) {
      if (az.w[k] == 0.0) continue;
      int iz = wrap_index(az.first + k, n);
      for (int j = 0; j < w; ++j) {
        double wzy = az.w[k] * ay.w[j];
        if (wzy == 0.0) continue;
        int iy = wrap_index(ay.first + j, n);
        const cplx* row = &vol.data[(size_t(iz) * n + iy) * n];
        cplx rowacc(0, 0);
        for (int i = 0; i < w; ++i)
          rowacc += ax.w[i] * row[wrap_index(ax.first + i, n)];
        acc += wzy * rowacc;
      }
    }
    out.v[s] = acc;
  }
  return out;
}

FourierImage extract_slice(const FourierVolume& vol, const Mat3& rot, double rho,
                           const InterpKernel& kernel) {
  return extract_slice(vol, rot, DiskLattice::make(vol.n, vol.voxel_size, rho), kernel);
}

void adjoint_slice(const FourierImage& img, const Mat3& rot, FourierVolume& accum,
                   const InterpKernel& kernel) {
  check_slice_args(accum, *img.lattice, kernel);
  const KernelTable& table = kernel_table(kernel);
  const int w = kernel.footprint;
  const int n = accum.n;
  const double g = double(accum.n) / img.lattice->n;

  for (size_t s = 0; s < img.lattice->sites.size(); ++s) {
    const auto& site = img.lattice->sites[s];
    cplx val = img.v[s] * site.mult;
    if (val == cplx(0, 0)) continue;
    Vec3 u = rot.tmul({site.kx * g, site.ky * g, 0.0});
    AxisWeights ax = axis_weights(u.x, table);
    AxisWeights ay = axis_weights(u.y, table);
    AxisWeights az = axis_weights(u.z, table);
    for (int k = 0; k < w; ++k) {
      if (az.w[k] == 0.0) continue;
      int iz = wrap_index(az.first + k, n);
      for (int j = 0; j < w; ++j) {
        double wzy = az.w[k] * ay.w[j];
        if (wzy == 0.0) continue;
        int iy = wrap_index(ay.first + j, n);
        cplx* row = &accum.data[(size_t(iz) * n + iy) * n];
        cplx v = wzy * val;
        for (int i = 0; i < w; ++i) row[wrap_index(ax.first + i, n)] += ax.w[i] * v;
      }
    }
  }
}

FourierImage apply_shift(const FourierImage& img, const Vec2& t) {
  FourierImage out = img;
  double step = img.lattice->freq_step();
  for (size_t s = 0; s < img.lattice->sites.size(); ++s) {
    const auto& site = img.lattice->sites[s];
    double phase = -2 * kPi * step * (site.kx * t.x + site.ky * t.y);
    out.v[s] *= cplx(std::cos(phase), std::sin(phase));
  }
  return out;
}

void CtfParams::check() const {
  if (identity) return;
  if (!(defocus_a > 0)) fail_usage("CTF defocus must be positive");
  if (!(voltage_kv > 0)) fail_usage("CTF voltage must be positive");
  if (amplitude_contrast < 0 || amplitude_contrast > 1)
    fail_usage("CTF amplitude contrast must lie in [0, 1]");
  if (envelope_b_factor < 0) fail_usage("CTF envelope B factor must be non-negative");
  if (spherical_aberration_mm < 0) fail_usage("CTF spherical aberration must be non-negative");
}

double electron_wavelength_a(double voltage_kv) {
  double v = voltage_kv * 1e3;
  return 12.2639 / std::sqrt(v + 0.97845e-6 * v * v);
}

double ctf_eval(const CtfParams& theta, double f) {
  if (theta.identity) return 1.0;
  double lambda = electron_wavelength_a(theta.voltage_kv);
  double cs = theta.spherical_aberration_mm * 1e7;  // mm -> Angstrom
  double f2 = f * f;
  double gamma = kPi * lambda * theta.defocus_a * f2 - 0.5 * kPi * cs * lambda * lambda * lambda * f2 * f2;
  double w = theta.amplitude_contrast;
  double value = -std::sqrt(1.0 - w * w) * std::sin(gamma) - w * std::cos(gamma);
  if (theta.envelope_b_factor > 0) value *= std::exp(-theta.envelope_b_factor * f2 / 4.0);
  return value;
}

FourierImage apply_ctf(const FourierImage& img, const CtfParams& theta) {
  theta.check();
  FourierImage out = img;
  for (size_t s = 0; s < img.lattice->sites.size(); ++s) {
    Vec2 f = img.lattice->freq(img.lattice->sites[s]);
    out.v[s] *= ctf_eval(theta, f.norm());
  }
  return out;
}

FourierImage forward_model(const PreparedVolume& pv, const Mat3& rot, const Vec2& t,
                           const CtfParams& theta,
                           const std::shared_ptr<const DiskLattice>& lattice) {
  if (pv.source_n <= 0) fail_usage("forward_model: volume not prepared");
  theta.check();
  FourierImage out = apply_ctf(apply_shift(extract_slice(pv.spectrum, rot, lattice, pv.kernel), t), theta);
  for (auto& c : out.v) c *= pv.scale;
  return out;
}

}  // namespace cryoforge
