#include <doctest.h>

#include <cmath>
#include <random>

#include "core/fft.hpp"
#include "core/priors.hpp"
#include "core/rng.hpp"

using namespace cryoforge;

namespace {

DensityVolume random_volume(int n, uint64_t seed, bool nonnegative = false) {
  DensityVolume v(n, 1.0);
  auto rng = make_rng(seed, "prior-test");
  NormalSampler g;
  for (auto& x : v.data) x = nonnegative ? std::abs(g(rng)) : g(rng);
  return v;
}

}  // namespace

TEST_CASE("uniform prior contributes nothing") {
  DensityVolume v = random_volume(8, 1);
  PriorSpec spec;
  CHECK(neg_log_prior(v, spec) == 0.0);
  DensityVolume g = neg_log_prior_grad(v, spec);
  for (double x : g.data) CHECK(x == 0.0);
}

TEST_CASE("exponential prior closed form and constant gradient") {
  PriorSpec spec;
  spec.kind = PriorKind::Exponential;
  spec.lambda = 2.5;

  DensityVolume zero(8, 1.0);
  CHECK(neg_log_prior(zero, spec) ==
        doctest::Approx(-512.0 * std::log(2.5)).epsilon(1e-14));

  DensityVolume v = random_volume(8, 2, /*nonnegative=*/true);
  double sum = 0;
  for (double x : v.data) sum += x;
  CHECK(neg_log_prior(v, spec) ==
        doctest::Approx(2.5 * sum - 512.0 * std::log(2.5)).epsilon(1e-13));

  DensityVolume g = neg_log_prior_grad(v, spec);
  for (double x : g.data) CHECK(x == 2.5);

  DensityVolume bad = v;
  bad.data[17] = -0.01;
  CHECK_THROWS_AS(neg_log_prior(bad, spec), Error);
  CHECK_THROWS_AS(neg_log_prior_grad(bad, spec), Error);
}

TEST_CASE("smoothness prior: constant volumes are free, shifts change nothing") {
  PriorSpec spec;
  spec.kind = PriorKind::Car;
  spec.sigma_car = 0.7;

  DensityVolume flat(8, 1.0);
  for (auto& x : flat.data) x = 4.2;
  CHECK(neg_log_prior(flat, spec) == doctest::Approx(0.0).epsilon(1e-20));
  DensityVolume gf = neg_log_prior_grad(flat, spec);
  for (double x : gf.data) CHECK(std::abs(x) < 1e-12);

  DensityVolume v = random_volume(8, 3);
  double base = neg_log_prior(v, spec);
  CHECK(base > 0);

  DensityVolume shifted(8, 1.0);
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        shifted.at(x, y, z) = v.at((x + 3) % 8, (y + 5) % 8, (z + 1) % 8);
  CHECK(neg_log_prior(shifted, spec) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("smoothness prior agrees with its Fourier diagonalization") {
  // The neighbor-mean is a periodic stationary convolution, so the quadratic
  // form diagonalizes in the Fourier basis with symbol
  // (w_x w_y w_z - 1)/26, w_a = 1 + 2 cos(2 pi k_a / n).
  PriorSpec spec;
  spec.kind = PriorKind::Car;
  spec.sigma_car = 1.3;
  int n = 8;
  DensityVolume v = random_volume(n, 4);
  FourierVolume f = fft3(v);

  double acc = 0;
  for (int kz = -n / 2; kz < n / 2; ++kz)
    for (int ky = -n / 2; ky < n / 2; ++ky)
      for (int kx = -n / 2; kx < n / 2; ++kx) {
        double wx = 1 + 2 * std::cos(2 * kPi * kx / n);
        double wy = 1 + 2 * std::cos(2 * kPi * ky / n);
        double wz = 1 + 2 * std::cos(2 * kPi * kz / n);
        double symbol = 1.0 - (wx * wy * wz - 1.0) / 26.0;
        acc += symbol * symbol * std::norm(f.at(kx, ky, kz));
      }
  double expected = acc / (2 * spec.sigma_car * spec.sigma_car);
  CHECK(neg_log_prior(v, spec) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("smoothness prior gradient matches finite differences") {
  PriorSpec spec;
  spec.kind = PriorKind::Car;
  spec.sigma_car = 0.9;
  DensityVolume v = random_volume(8, 5);
  DensityVolume g = neg_log_prior_grad(v, spec);

  std::mt19937_64 pick(11);
  std::uniform_int_distribution<size_t> coord(0, v.data.size() - 1);
  double h = 1e-5;
  for (int trial = 0; trial < 60; ++trial) {
    size_t i = coord(pick);
    DensityVolume vp = v, vm = v;
    vp.data[i] += h;
    vm.data[i] -= h;
    double fd = (neg_log_prior(vp, spec) - neg_log_prior(vm, spec)) / (2 * h);
    CHECK(g.data[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("prior parameter validation and rate calibration") {
  PriorSpec bad;
  bad.kind = PriorKind::Exponential;
  bad.lambda = 0;
  CHECK_THROWS_AS(bad.check(), Error);
  bad.kind = PriorKind::Car;
  bad.sigma_car = -1;
  CHECK_THROWS_AS(bad.check(), Error);

  CHECK(calibrate_exponential_lambda(50.0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(calibrate_exponential_lambda(10.0, 0.1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(calibrate_exponential_lambda(0.0), Error);
  CHECK_THROWS_AS(calibrate_exponential_lambda(1.0, -0.5), Error);
}
