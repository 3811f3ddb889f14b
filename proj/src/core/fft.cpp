#include "core/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace cryoforge {

namespace {

// Plan cache: creation is serialized (the FFTW planner is not thread safe),
// execution uses the new-array interface which is. FFTW_ESTIMATE keeps the
// algorithm choice deterministic run to run, FFTW_UNALIGNED lifts the
// alignment requirement so any buffer may be passed at execute time.
class PlanCache {
 public:
  fftw_plan get(int rank, int n, int sign) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_tuple(rank, n, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    size_t total = 1;
    for (int i = 0; i < rank; ++i) total *= n;
    std::vector<cplx> dummy_in(total), dummy_out(total);
    auto* in = reinterpret_cast<fftw_complex*>(dummy_in.data());
    auto* out = reinterpret_cast<fftw_complex*>(dummy_out.data());
    unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan p = rank == 3 ? fftw_plan_dft_3d(n, n, n, in, out, sign, flags)
                            : fftw_plan_dft_2d(n, n, in, out, sign, flags);
    if (!p) fail_numeric("FFTW plan creation failed");
    plans_[key] = p;
    return p;
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void execute(int rank, int n, int sign, std::vector<cplx>& in, std::vector<cplx>& out) {
  fftw_plan p = plan_cache().get(rank, n, sign);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

// Centered <-> standard index maps. With c = n/2, the centered transform of f
// equals the standard DFT of f rotated by c samples per axis, followed by an
// fftshift of the spectrum; both rotations are exact index permutations.
inline int to_standard(int i, int n) { return (i + n / 2) % n; }

}  // namespace

FourierVolume fft3(const DensityVolume& v) {
  int n = v.n;
  std::vector<cplx> in(size_t(n) * n * n), out(in.size());
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        size_t dst = (size_t(to_standard(z, n)) * n + to_standard(y, n)) * n + to_standard(x, n);
        in[dst] = cplx(v.at(x, y, z), 0.0);
      }
  execute(3, n, FFTW_FORWARD, in, out);
  FourierVolume f(n, v.voxel_size);
  double scale = 1.0 / std::pow(double(n), 1.5);
  for (int kz = -n / 2; kz < n / 2; ++kz)
    for (int ky = -n / 2; ky < n / 2; ++ky)
      for (int kx = -n / 2; kx < n / 2; ++kx) {
        size_t m = (size_t((kz + n) % n) * n + (ky + n) % n) * n + (kx + n) % n;
        f.at(kx, ky, kz) = out[m] * scale;
      }
  return f;
}

DensityVolume ifft3(const FourierVolume& f) {
  int n = f.n;
  std::vector<cplx> in(size_t(n) * n * n), out(in.size());
  for (int kz = -n / 2; kz < n / 2; ++kz)
    for (int ky = -n / 2; ky < n / 2; ++ky)
      for (int kx = -n / 2; kx < n / 2; ++kx) {
        size_t m = (size_t((kz + n) % n) * n + (ky + n) % n) * n + (kx + n) % n;
        in[m] = f.at(kx, ky, kz);
      }
  execute(3, n, FFTW_BACKWARD, in, out);
  DensityVolume v(n, f.voxel_size);
  double scale = 1.0 / std::pow(double(n), 1.5);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        size_t src = (size_t(to_standard(z, n)) * n + to_standard(y, n)) * n + to_standard(x, n);
        v.at(x, y, z) = out[src].real() * scale;
      }
  return v;
}

std::vector<cplx> fft2_dense(const Image& img) {
  int n = img.n;
  std::vector<cplx> in(size_t(n) * n), out(in.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      in[size_t(to_standard(y, n)) * n + to_standard(x, n)] = cplx(img.at(x, y), 0.0);
  execute(2, n, FFTW_FORWARD, in, out);
  std::vector<cplx> f(in.size());
  double scale = 1.0 / double(n);
  for (int ky = -n / 2; ky < n / 2; ++ky)
    for (int kx = -n / 2; kx < n / 2; ++kx) {
      size_t m = size_t((ky + n) % n) * n + (kx + n) % n;
      f[size_t(ky + n / 2) * n + (kx + n / 2)] = out[m] * scale;
    }
  return f;
}

FourierImage fft2(const Image& img, std::shared_ptr<const DiskLattice> lattice) {
  if (img.n != lattice->n) fail_data("image size does not match lattice");
  std::vector<cplx> dense = fft2_dense(img);
  int n = img.n;
  FourierImage f(std::move(lattice));
  for (size_t i = 0; i < f.lattice->sites.size(); ++i) {
    const auto& s = f.lattice->sites[i];
    f.v[i] = dense[size_t(s.ky + n / 2) * n + (s.kx + n / 2)];
  }
  return f;
}

Image ifft2(const FourierImage& f) {
  const DiskLattice& lat = *f.lattice;
  int n = lat.n;
  int h = n / 2;
  std::vector<cplx> in(size_t(n) * n, cplx(0, 0)), out(in.size());
  auto neg = [&](int k) { return k == -h ? -h : -k; };
  for (size_t i = 0; i < lat.sites.size(); ++i) {
    const auto& s = lat.sites[i];
    cplx val = f.v[i];
    bool self = (s.kx == 0 || s.kx == -h) && (s.ky == 0 || s.ky == -h);
    if (self) val = cplx(val.real(), 0.0);  // self-conjugate sites must be real
    size_t m = size_t((s.ky + n) % n) * n + (s.kx + n) % n;
    in[m] = val;
    if (!self) {
      size_t mc = size_t((neg(s.ky) + n) % n) * n + (neg(s.kx) + n) % n;
      in[mc] = std::conj(val);
    }
  }
  execute(2, n, FFTW_BACKWARD, in, out);
  Image img(n, lat.pixel_size);
  double scale = 1.0 / double(n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      img.at(x, y) = out[size_t(to_standard(y, n)) * n + to_standard(x, n)].real() * scale;
  return img;
}

}  // namespace cryoforge
