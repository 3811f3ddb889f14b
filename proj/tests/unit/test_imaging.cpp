#include <doctest.h>

#include <cmath>
#include <random>

#include "core/fft.hpp"
#include "core/imaging.hpp"
#include "core/pose.hpp"
#include "core/rng.hpp"
#include "support/oracles.hpp"

using namespace cryoforge;

namespace {

DensityVolume random_volume(int n, double voxel, uint64_t seed) {
  DensityVolume v(n, voxel);
  auto rng = make_rng(seed, "imaging-test-volume");
  NormalSampler gauss;
  for (auto& x : v.data) x = gauss(rng);
  return v;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uu(0, 1);
  Vec3 ax{uu(rng) - 0.5, uu(rng) - 0.5, uu(rng) - 0.5};
  return Mat3::axis_angle(ax.normalized(), uu(rng) * 3.0);
}

DensityVolume smooth_volume(const DensityVolume& vol, double sigma_voxels) {
  int m = vol.n;
  FourierVolume f = fft3(vol);
  for (int kz = -m / 2; kz < m / 2; ++kz)
    for (int ky = -m / 2; ky < m / 2; ++ky)
      for (int kx = -m / 2; kx < m / 2; ++kx) {
        double r2 = double(kx) * kx + double(ky) * ky + double(kz) * kz;
        f.at(kx, ky, kz) *=
            std::exp(-r2 * sigma_voxels * sigma_voxels * 2 * kPi * kPi / (double(m) * m));
      }
  return ifft3(f);
}

// Wide-footprint kernel used as a high-accuracy interpolation reference.
InterpKernel oracle_kernel() { return InterpKernel{16, 16.0}; }

}  // namespace

TEST_CASE("identity slice reproduces stored plane values exactly") {
  int n = 16;
  DensityVolume vol = random_volume(n, 1.2, 41);
  FourierVolume fv = fft3(vol);
  auto lat = DiskLattice::make(n, 1.2, 0.3 / 1.2 * 0.5);
  FourierImage s = extract_slice(fv, Mat3::identity(), lat);
  for (size_t i = 0; i < lat->sites.size(); ++i) {
    const auto& site = lat->sites[i];
    CHECK(std::abs(s.v[i] - fv.at(site.kx, site.ky, 0)) < 1e-12);
  }
}

TEST_CASE("identity slice of a padded volume lands on scaled lattice points") {
  int n = 16;
  DensityVolume vol = random_volume(n, 1.0, 42);
  PreparedVolume pv = prepare_projection_volume(vol);
  auto lat = DiskLattice::make(n, 1.0, 0.25);
  FourierImage s = extract_slice(pv.spectrum, Mat3::identity(), lat, pv.kernel);
  for (size_t i = 0; i < lat->sites.size(); ++i) {
    const auto& site = lat->sites[i];
    CHECK(std::abs(s.v[i] - pv.spectrum.at(2 * site.kx, 2 * site.ky, 0)) < 1e-12);
  }
}

TEST_CASE("slices of a spherically symmetric volume do not depend on rotation") {
  int n = 32;
  FourierVolume fv(n, 1.0);
  double sk = 4.0;
  for (int kz = -n / 2; kz < n / 2; ++kz)
    for (int ky = -n / 2; ky < n / 2; ++ky)
      for (int kx = -n / 2; kx < n / 2; ++kx) {
        double r2 = double(kx) * kx + double(ky) * ky + double(kz) * kz;
        fv.at(kx, ky, kz) = std::exp(-r2 / (2 * sk * sk));
      }
  auto lat = DiskLattice::make(n, 1.0, 0.25);
  InterpKernel wide = oracle_kernel();
  FourierImage ref = extract_slice(fv, Mat3::identity(), lat, wide);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    FourierImage s = extract_slice(fv, random_rotation(rng), lat, wide);
    double num = 0, den = 0;
    for (size_t i = 0; i < s.v.size(); ++i) {
      num += std::norm(s.v[i] - ref.v[i]);
      den += std::norm(ref.v[i]);
    }
    CHECK(std::sqrt(num / den) < 1e-6);
  }
}

TEST_CASE("slice pipeline matches a real-space line-integral oracle at low frequency") {
  int n = 16;
  double voxel = 1.5;
  DensityVolume vol(n, voxel);
  auto rng_seed = make_rng(11, "proj-oracle");
  NormalSampler gauss;
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        double dx = x - n / 2, dy = y - n / 2, dz = z - n / 2;
        if (dx * dx + dy * dy + dz * dz <= 5.5 * 5.5) vol.at(x, y, z) = gauss(rng_seed);
      }
  vol = smooth_volume(vol, 0.8);

  auto lat = DiskLattice::make(n, voxel, 0.25 * 0.5 / voxel);
  std::mt19937_64 rot_rng(3);
  std::vector<Mat3> rots;
  for (int i = 0; i < 6; ++i) rots.push_back(random_rotation(rot_rng));

  auto pipeline_error = [&](const InterpKernel& k) {
    PreparedVolume pv = prepare_projection_volume(vol, k, 2);
    double worst = 0;
    for (const Mat3& R : rots) {
      FourierImage s = extract_slice(pv.spectrum, R, lat, k);
      for (auto& c : s.v) c *= pv.scale;
      Image proj = oracle::project_real_space(vol, R);
      auto ref = oracle::dft2_direct(proj);
      double num = 0, den = 0;
      for (size_t i = 0; i < lat->sites.size(); ++i) {
        const auto& site = lat->sites[i];
        cplx r = ref[size_t(site.ky + n / 2) * n + (site.kx + n / 2)];
        num += site.mult * std::norm(s.v[i] - r);
        den += site.mult * std::norm(r);
      }
      worst = std::max(worst, std::sqrt(num / den));
    }
    return worst;
  };

  double err4 = pipeline_error(InterpKernel{});  // default footprint 4
  CHECK(err4 <= 0.02);
  double err2 = pipeline_error(InterpKernel{2, 2.0});
  CHECK(err2 > err4);  // wider footprint is more accurate
}

TEST_CASE("adjoint_slice is the exact transpose of extract_slice") {
  int n = 8;
  DensityVolume vol = random_volume(n, 1.0, 77);
  FourierVolume fv = fft3(vol);
  auto lat = DiskLattice::make(n, 1.0, 0.4);
  std::mt19937_64 rng(5);
  auto urng = make_rng(6, "adjoint-u");
  NormalSampler gauss;
  for (int trial = 0; trial < 10; ++trial) {
    Mat3 R = random_rotation(rng);
    FourierImage u(lat);
    for (auto& c : u.v) c = cplx(gauss(urng), gauss(urng));

    FourierImage pv = extract_slice(fv, R, lat);
    cplx lhs(0, 0);
    for (size_t i = 0; i < lat->sites.size(); ++i)
      lhs += lat->sites[i].mult * pv.v[i] * std::conj(u.v[i]);

    FourierVolume acc(n, 1.0);
    adjoint_slice(u, R, acc);
    cplx rhs(0, 0);
    for (size_t i = 0; i < fv.data.size(); ++i) rhs += fv.data[i] * std::conj(acc.data[i]);

    CHECK(std::abs(lhs - rhs) < 1e-10 * std::abs(lhs));
  }
}

TEST_CASE("adjoint of a zero image leaves the accumulator unchanged") {
  auto lat = DiskLattice::make(8, 1.0, 0.3);
  FourierImage zero(lat);
  FourierVolume acc(8, 1.0);
  acc.at(1, 2, 3) = cplx(4, 5);
  adjoint_slice(zero, Mat3::identity(), acc);
  CHECK(acc.at(1, 2, 3) == cplx(4, 5));
  double total = 0;
  for (auto& c : acc.data) total += std::abs(c);
  CHECK(total == doctest::Approx(std::abs(cplx(4, 5))));
}

TEST_CASE("identity adjoint deposits only on the central plane footprint") {
  int n = 8;
  auto lat = DiskLattice::make(n, 1.0, 0.3);
  FourierImage impulse(lat);
  impulse.v[lat->sites.size() / 2] = cplx(1, 0);
  FourierVolume acc(n, 1.0);
  adjoint_slice(impulse, Mat3::identity(), acc);
  // footprint half-width 2 around the z=0 plane: kz = 0 exactly on lattice,
  // so off-plane weights vanish and all mass stays at kz == 0
  for (int kz = -n / 2; kz < n / 2; ++kz)
    if (kz != 0)
      for (int ky = -n / 2; ky < n / 2; ++ky)
        for (int kx = -n / 2; kx < n / 2; ++kx) CHECK(std::abs(acc.at(kx, ky, kz)) == 0.0);
  double mass = 0;
  for (auto& c : acc.data) mass += std::abs(c);
  CHECK(mass > 0);
}

TEST_CASE("apply_shift is a pure phase with exact inverse") {
  int n = 16;
  DensityVolume vol = random_volume(n, 2.0, 13);
  FourierVolume fv = fft3(vol);
  auto lat = DiskLattice::make(n, 2.0, 0.2);
  FourierImage img = extract_slice(fv, Mat3::identity(), lat);

  FourierImage same = apply_shift(img, {0, 0});
  for (size_t i = 0; i < img.v.size(); ++i) CHECK(std::abs(same.v[i] - img.v[i]) == 0.0);

  Vec2 t{3.7, -1.9};
  FourierImage moved = apply_shift(img, t);
  for (size_t i = 0; i < img.v.size(); ++i)
    CHECK(std::abs(std::abs(moved.v[i]) - std::abs(img.v[i])) < 1e-12);
  FourierImage back = apply_shift(moved, {-t.x, -t.y});
  for (size_t i = 0; i < img.v.size(); ++i) CHECK(std::abs(back.v[i] - img.v[i]) < 1e-12);
}

TEST_CASE("one-pixel shift equals a real-space roll") {
  int n = 16;
  double px = 1.7;
  Image impulse(n, px);
  impulse.at(5, 9) = 1.0;
  Image limited = oracle::bandlimit(impulse, 0.2);
  FourierImage spec = fft2(limited, DiskLattice::make(n, px, 0.2));
  Image shifted = ifft2(apply_shift(spec, {px, 0}));

  Image rolled(n, px);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) rolled.at((x + 1) % n, y) = limited.at(x, y);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) CHECK(shifted.at(x, y) == doctest::Approx(rolled.at(x, y)).epsilon(1e-10));
}

TEST_CASE("ctf closed form") {
  CtfParams theta;
  theta.defocus_a = 18000;
  theta.spherical_aberration_mm = 2.0;
  theta.voltage_kv = 300;
  theta.amplitude_contrast = 0.07;
  theta.envelope_b_factor = 0;

  // known electron wavelength at 300 kV
  CHECK(electron_wavelength_a(300) == doctest::Approx(0.019687).epsilon(1e-4));

  // value at f = 0 is minus the amplitude contrast
  CHECK(ctf_eval(theta, 0) == doctest::Approx(-theta.amplitude_contrast));

  // bounded by 1 without envelope
  for (int i = 0; i <= 400; ++i) CHECK(std::abs(ctf_eval(theta, i * 1e-3)) <= 1.0 + 1e-12);

  // first zero: bracket the analytic root of the full form. Near f=0 the value
  // is negative (-w); it must cross zero before the pure-phase term's first
  // half-period is out.
  double lambda = electron_wavelength_a(300);
  double f_half = std::sqrt(1.0 / (lambda * theta.defocus_a));  // gamma ~ pi
  int sign_changes = 0;
  double prev = ctf_eval(theta, 1e-5);
  for (int i = 1; i <= 1000; ++i) {
    double cur = ctf_eval(theta, f_half * i / 1000.0);
    if (prev < 0 && cur >= 0) ++sign_changes;
    prev = cur;
  }
  CHECK(sign_changes >= 1);

  // zeros move when defocus changes: first crossing shifts to lower f
  auto first_zero = [&](double dz) {
    CtfParams th = theta;
    th.defocus_a = dz;
    double p = ctf_eval(th, 1e-5);
    for (int i = 1; i <= 40000; ++i) {
      double f = 0.4 * i / 40000.0;
      double c = ctf_eval(th, f);
      if (p < 0 && c >= 0) return f;
      p = c;
    }
    return 0.4;
  };
  CHECK(first_zero(25000) < first_zero(12000));
}

TEST_CASE("ctf application is diagonal and respects the identity hook") {
  int n = 16;
  DensityVolume vol = random_volume(n, 1.1, 99);
  FourierVolume fv = fft3(vol);
  auto lat = DiskLattice::make(n, 1.1, 0.3);
  FourierImage img = extract_slice(fv, Mat3::identity(), lat);

  CtfParams ident;
  ident.identity = true;
  FourierImage same = apply_ctf(img, ident);
  for (size_t i = 0; i < img.v.size(); ++i) CHECK(same.v[i] == img.v[i]);

  CtfParams theta;
  theta.defocus_a = 14000;
  FourierImage once = apply_ctf(img, theta);
  FourierImage twice = apply_ctf(once, theta);
  double max_ctf = 0;
  for (size_t i = 0; i < img.v.size(); ++i) {
    double c = ctf_eval(theta, lat->freq(lat->sites[i]).norm());
    max_ctf = std::max(max_ctf, std::abs(c));
    CHECK(std::abs(twice.v[i] - c * c * img.v[i]) < 1e-12);
  }
  CHECK(std::sqrt(once.norm2()) <= max_ctf * std::sqrt(img.norm2()) * (1 + 1e-12));
}

TEST_CASE("forward model is linear and zero on zero volumes") {
  int n = 16;
  DensityVolume zero(n, 1.0);
  PreparedVolume pz = prepare_projection_volume(zero);
  auto lat = DiskLattice::make(n, 1.0, 0.3);
  CtfParams theta;
  std::mt19937_64 rng(21);
  Mat3 R = random_rotation(rng);
  FourierImage out = forward_model(pz, R, {1.0, -2.0}, theta, lat);
  CHECK(out.norm2() == 0.0);

  DensityVolume a = random_volume(n, 1.0, 1), b = random_volume(n, 1.0, 2);
  DensityVolume mix(n, 1.0);
  for (size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = 2.0 * a.data[i] - 0.5 * b.data[i];
  FourierImage fa = forward_model(prepare_projection_volume(a), R, {1.0, -2.0}, theta, lat);
  FourierImage fb = forward_model(prepare_projection_volume(b), R, {1.0, -2.0}, theta, lat);
  FourierImage fm = forward_model(prepare_projection_volume(mix), R, {1.0, -2.0}, theta, lat);
  double scale = 0;
  for (size_t i = 0; i < fm.v.size(); ++i) scale = std::max(scale, std::abs(fm.v[i]));
  for (size_t i = 0; i < fm.v.size(); ++i)
    CHECK(std::abs(fm.v[i] - (2.0 * fa.v[i] - 0.5 * fb.v[i])) < 1e-10 * scale);
}

TEST_CASE("imaging argument validation") {
  CHECK_THROWS_AS((InterpKernel{3, 4.0}).check(), Error);
  CHECK_THROWS_AS((InterpKernel{4, -1.0}).check(), Error);
  DensityVolume v(8, 1.0);
  CHECK_THROWS_AS(prepare_projection_volume(v, {}, 0), Error);
  CtfParams bad;
  bad.defocus_a = -5;
  CHECK_THROWS_AS(bad.check(), Error);
  CtfParams bad2;
  bad2.amplitude_contrast = 1.5;
  CHECK_THROWS_AS(bad2.check(), Error);
  // lattice finer than volume
  FourierVolume fv(8, 1.0);
  auto lat16 = DiskLattice::make(16, 1.0, 0.3);
  CHECK_THROWS_AS(extract_slice(fv, Mat3::identity(), lat16), Error);
}
