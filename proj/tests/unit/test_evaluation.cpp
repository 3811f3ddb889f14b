#include <cmath>
#include <limits>
#include <vector>

#include "core/evaluation.hpp"
#include "core/fft.hpp"
#include "core/imaging.hpp"
#include "core/importance.hpp"
#include "core/likelihood.hpp"
#include "core/pose.hpp"
#include "core/quadrature.hpp"
#include "core/rng.hpp"
#include "core/simulator.hpp"
#include "core/types.hpp"
#include "doctest.h"

using namespace cryoforge;

namespace {

Image noise_image(int n, double pixel, double sigma, uint64_t seed) {
  Image img(n, pixel);
  auto rng = make_rng(seed, "eval-noise-image");
  NormalSampler gauss;
  for (auto& p : img.data) p = sigma * gauss(rng);
  return img;
}

Image render_at(const PreparedVolume& pv, const Mat3& rot, const Vec2& shift,
                const CtfParams& theta, const std::shared_ptr<const DiskLattice>& lattice) {
  return ifft2(forward_model(pv, rot, shift, theta, lattice));
}

// Appendix-style reference: the posterior-expected squared residual by brute
// force over every pose triple, each residual recomputed from the forward
// model, accumulated in extended precision.
long double emse_oracle(const Image& img, const CtfParams& theta, const PreparedVolume& pv,
                        const QuadratureScheme& scheme, double sigma) {
  auto lattice = DiskLattice::make(img.n, img.pixel_size, scheme.rho);
  FourierImage data = fft2(img, lattice);
  const double log_norm_const =
      -0.5 * lattice->coefficient_count() * std::log(2 * kPi * sigma * sigma);

  struct Term {
    long double log_w_p;
    long double resid2;
  };
  std::vector<Term> terms;
  long double max_log = -std::numeric_limits<long double>::infinity();
  for (size_t a = 0; a < scheme.directions.points.size(); ++a) {
    for (size_t b = 0; b < scheme.inplane.angles.size(); ++b) {
      Pose p;
      p.direction = scheme.directions.points[a];
      p.inplane_angle = scheme.inplane.angles[b];
      Mat3 rot = pose_to_rotation(p);
      for (size_t l = 0; l < scheme.shifts.points.size(); ++l) {
        FourierImage model = forward_model(pv, rot, scheme.shifts.points[l], theta, lattice);
        long double resid2 = 0;
        for (size_t s = 0; s < lattice->sites.size(); ++s) {
          cplx d = data.v[s] - model.v[s];
          resid2 += lattice->sites[s].mult * (long double)(std::norm(d));
        }
        long double lp = -resid2 / (2.0L * sigma * sigma) + log_norm_const;
        long double log_w =
            std::log((long double)(scheme.directions.weights[a] * scheme.inplane.weights[b] *
                                   scheme.shifts.weights[l] * scheme.shifts.prior_values[l]));
        terms.push_back({log_w + lp, resid2});
        max_log = std::max(max_log, log_w + lp);
      }
    }
  }
  long double num = 0, den = 0;
  for (const auto& t : terms) {
    long double w = expl(t.log_w_p - max_log);
    num += w * t.resid2;
    den += w;
  }
  return num / den;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("perfectly explained image scores exactly zero") {
    DensityVolume zero(16, 3.0);
    QuadratureScheme scheme = build_scheme(0.1, 16, 3.0, 4.0);
    std::vector<Image> images{Image(16, 3.0)};  // all-zero image
    std::vector<CtfParams> ctfs{CtfParams{}};

    EvalReport rep = evaluate_dataset(images, ctfs, zero, scheme, 1.0);
    CHECK(rep.per_image.size() == 1);
    CHECK(rep.per_image[0].emse == 0.0);
    CHECK(rep.per_image[0].flagged == false);
    CHECK(rep.rremse == 0.0);
    CHECK(rep.rho == scheme.rho);
    CHECK(rep.mean_fraction_evaluated == 1.0);

    double total = 0;
    for (double q : rep.direction_marginal) {
      CHECK(q >= 0.0);
      total += q;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  }

  TEST_CASE("noise against a zero volume scores the noise power") {
    const int n = 32;
    const double voxel = 2.8, sigma = 2.5;
    DensityVolume zero(n, voxel);
    QuadratureScheme scheme = build_scheme(0.15, n, voxel, 3.0);

    std::vector<Image> images;
    std::vector<CtfParams> ctfs;
    for (int i = 0; i < 12; ++i) {
      images.push_back(noise_image(n, voxel, sigma, 100 + uint64_t(i)));
      ctfs.push_back(CtfParams{});
    }
    EvalReport rep = evaluate_dataset(images, ctfs, zero, scheme, sigma);

    // with a zero volume the residual is the data itself at every pose
    auto lattice = DiskLattice::make(n, voxel, scheme.rho);
    double d = lattice->coefficient_count();
    for (int i = 0; i < 12; ++i) {
      double data_norm2 = fft2(images[size_t(i)], lattice).norm2();
      CHECK(rep.per_image[size_t(i)].emse ==
            doctest::Approx(data_norm2).epsilon(1e-10));
    }
    CHECK(rep.per_image[0].emse / d == doctest::Approx(sigma * sigma).epsilon(0.10));
    CHECK(rep.rremse == doctest::Approx(1.0).epsilon(0.05));
    CHECK(rep.flagged_count == 0);
  }

  TEST_CASE("expected error matches the brute-force double sum") {
    const int n = 8;
    const double voxel = 3.0, sigma = 1.3;
    DensityVolume v(n, voxel);
    auto vr = make_rng(3, "eval-oracle-volume");
    for (auto& x : v.data) x = uniform01(vr);
    PreparedVolume pv = prepare_projection_volume(v);
    QuadratureScheme scheme = build_scheme(0.08, n, voxel, 4.0);
    REQUIRE(scheme.total_points() > 100);

    CtfParams theta;
    auto lattice = DiskLattice::make(n, voxel, scheme.rho);
    Pose true_pose;
    true_pose.direction = Vec3{0.3, -0.5, 0.8}.normalized();
    true_pose.inplane_angle = 1.1;
    Image img = render_at(pv, pose_to_rotation(true_pose), {1.5, -2.0}, theta, lattice);
    auto ir = make_rng(4, "eval-oracle-noise");
    NormalSampler gauss;
    for (auto& p : img.data) p += sigma * gauss(ir);

    ImageTerms terms = make_image_terms(img, theta, scheme, sigma);
    ImportanceState state;
    auto rng = make_rng(5, "eval-oracle-rng");
    EvalOptions opts;
    ImageEval exhaustive = expected_mse(terms, pv, scheme, state, 0, rng, opts);
    CHECK(exhaustive.fraction_evaluated == 1.0);
    CHECK_FALSE(exhaustive.flagged);

    long double oracle = emse_oracle(img, theta, pv, scheme, sigma);
    CHECK(std::abs(exhaustive.emse - double(oracle)) <= 1e-10 * double(oracle));

    // forcing the subsampled path on an unseen state still evaluates the full
    // grid (first visit), and must agree with the exhaustive sum
    ImportanceState fresh;
    EvalOptions tiny;
    tiny.exhaustive_threshold = 1;
    auto rng2 = make_rng(6, "eval-oracle-rng2");
    ImageEval first_visit = expected_mse(terms, pv, scheme, fresh, 0, rng2, tiny);
    CHECK(first_visit.fraction_evaluated == 1.0);
    CHECK(std::abs(first_visit.emse - exhaustive.emse) <= 1e-12 * exhaustive.emse);
    CHECK(first_visit.log_marginal ==
          doctest::Approx(exhaustive.log_marginal).epsilon(1e-12));

    // the second visit samples
    auto rng3 = make_rng(7, "eval-oracle-rng3");
    ImageEval second = expected_mse(terms, pv, scheme, fresh, 600, rng3, tiny);
    CHECK(second.fraction_evaluated < 1.0);
    CHECK(second.emse > 0.0);
  }

  TEST_CASE("true volume at negligible noise explains held-out images") {
    const int n = 32;
    const double voxel = 2.8;
    DensityVolume v = phantom_geometric(n, voxel, 2, 31);
    QuadratureScheme scheme = build_scheme(0.1, n, voxel, 0.0);
    PreparedVolume pv = prepare_projection_volume(v);
    auto lattice = DiskLattice::make(n, voxel, scheme.rho);
    CtfParams theta;
    theta.identity = true;

    std::vector<Image> images;
    std::vector<CtfParams> ctfs;
    double rms = 0;
    for (int i = 0; i < 4; ++i) {
      size_t dj = (7 + 11 * size_t(i)) % scheme.directions.points.size();
      size_t pk = (2 + 3 * size_t(i)) % scheme.inplane.angles.size();
      Pose p;
      p.direction = scheme.directions.points[dj];
      p.inplane_angle = scheme.inplane.angles[pk];
      images.push_back(render_at(pv, pose_to_rotation(p), {0, 0}, theta, lattice));
      ctfs.push_back(theta);
      for (double px : images.back().data) rms += px * px;
    }
    rms = std::sqrt(rms / (4.0 * images[0].data.size()));
    double sigma = 0.01 * rms;

    EvalReport with_truth = evaluate_dataset(images, ctfs, v, scheme, sigma);
    CHECK(with_truth.rremse >= 0.0);
    CHECK(with_truth.rremse < 1e-3);

    // a zero volume cannot beat the truth on its own data
    DensityVolume zero(n, voxel);
    EvalReport with_zero = evaluate_dataset(images, ctfs, zero, scheme, sigma);
    CHECK(with_zero.rremse > 100 * with_truth.rremse);
  }

  TEST_CASE("vanishing pose densities flag the image") {
    const int n = 16;
    // sigma keeps 1/(2 sigma^2) finite while the residual of the bright
    // image overflows the exponent: that image alone reaches -inf density
    const double voxel = 3.0, sigma = 1e-150;
    DensityVolume zero(n, voxel);
    QuadratureScheme scheme = build_scheme(0.1, n, voxel, 0.0);
    PreparedVolume pv = prepare_projection_volume(zero);

    Image ones(n, voxel);
    for (auto& p : ones.data) p = 1e5;
    ImageTerms terms = make_image_terms(ones, CtfParams{}, scheme, sigma);
    ImportanceState state;
    auto rng = make_rng(8, "eval-flag");
    ImageEval ev = expected_mse(terms, pv, scheme, state, 0, rng);
    CHECK(ev.flagged);
    CHECK(state.last_seen_iteration == -1);  // poisoned evidence is not stored

    // dataset path: the flagged image is excluded, the clean one counts
    std::vector<Image> images{Image(n, voxel), ones};
    std::vector<CtfParams> ctfs{CtfParams{}, CtfParams{}};
    EvalReport rep = evaluate_dataset(images, ctfs, zero, scheme, sigma);
    CHECK(rep.flagged_count == 1);
    CHECK(rep.per_image[1].flagged);
    CHECK_FALSE(rep.per_image[0].flagged);
    CHECK(rep.rremse == 0.0);

    // every image flagged is a numeric failure
    std::vector<Image> all_bad{ones};
    std::vector<CtfParams> one_ctf{CtfParams{}};
    CHECK_THROWS_AS(evaluate_dataset(all_bad, one_ctf, zero, scheme, sigma), Error);
  }

  TEST_CASE("direction marginal of fresh states is exactly uniform") {
    QuadratureScheme scheme = build_scheme(0.1, 16, 3.0, 0.0);
    size_t m = scheme.directions.points.size();
    std::vector<ImportanceState> states(3);
    std::vector<double> avg = direction_marginal_average(states, scheme);
    REQUIRE(avg.size() == m);
    for (double q : avg) CHECK(q == doctest::Approx(1.0 / double(m)).epsilon(1e-12));

    CHECK_THROWS_AS(direction_marginal_average({}, scheme), Error);
  }

  TEST_CASE("equatorial poses concentrate the averaged direction proposal") {
    const int n = 32;
    const double voxel = 2.8;
    DensityVolume v = phantom_geometric(n, voxel, 0, 37);
    QuadratureScheme scheme = build_scheme(0.05, n, voxel, 0.0);
    PreparedVolume pv = prepare_projection_volume(v);
    auto lattice = DiskLattice::make(n, voxel, scheme.rho);
    CtfParams theta;
    theta.identity = true;

    auto rng = make_rng(9, "equatorial-poses");
    std::vector<ImportanceState> states(10);
    for (int i = 0; i < 10; ++i) {
      double az = 2 * kPi * uniform01(rng);
      Pose p;
      p.direction = {std::cos(az), std::sin(az), 0.0};
      p.inplane_angle = 2 * kPi * uniform01(rng);
      Image img = render_at(pv, pose_to_rotation(p), {0, 0}, theta, lattice);
      double rms = 0;
      for (double px : img.data) rms += px * px;
      rms = std::sqrt(rms / double(img.data.size()));

      ImageTerms terms = make_image_terms(img, theta, scheme, 0.3 * rms);
      IsMarginal obs;
      obs.directions = full_direction_selection(scheme);
      obs.inplanes = full_inplane_selection(scheme);
      obs.shifts = full_shift_selection(scheme);
      obs.result = marginal_over(terms, pv, scheme, obs.directions, obs.inplanes, obs.shifts);
      update_state(states[size_t(i)], obs, 800, int(scheme.generation));
    }

    std::vector<double> avg = direction_marginal_average(states, scheme);
    double in_band = 0, total = 0;
    for (size_t j = 0; j < avg.size(); ++j) {
      total += avg[j];
      if (std::abs(scheme.directions.points[j].z) < 0.5) in_band += avg[j];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    INFO("equatorial band mass ", in_band);
    CHECK(in_band > 0.8);
  }

  TEST_CASE("epoch kl diagnostic") {
    std::vector<double> p{0.5, 0.5};
    CHECK(epoch_kl(p, p) == 0.0);

    std::vector<double> c{0.25, 0.75};
    CHECK(epoch_kl(p, c) == doctest::Approx(0.1308120359).epsilon(1e-8));
    CHECK(epoch_kl(p, c) > 0.0);
    CHECK(epoch_kl(c, p) != doctest::Approx(epoch_kl(p, c)).epsilon(1e-6));

    std::vector<double> no_floor{1.0, 0.0};
    CHECK_THROWS_AS(epoch_kl(no_floor, c), Error);
    std::vector<double> mismatched{1.0};
    CHECK_THROWS_AS(epoch_kl(mismatched, c), Error);
  }

  TEST_CASE("evaluation validation") {
    DensityVolume zero(16, 3.0);
    QuadratureScheme scheme = build_scheme(0.1, 16, 3.0, 0.0);
    std::vector<Image> none;
    std::vector<CtfParams> ctfs;
    CHECK_THROWS_AS(evaluate_dataset(none, ctfs, zero, scheme, 1.0), Error);

    std::vector<Image> one{Image(16, 3.0)};
    std::vector<CtfParams> two{CtfParams{}, CtfParams{}};
    CHECK_THROWS_AS(evaluate_dataset(one, two, zero, scheme, 1.0), Error);

    EvalOptions bad;
    bad.s0 = 0.5;
    ImageTerms terms = make_image_terms(one[0], CtfParams{}, scheme, 1.0);
    PreparedVolume pv = prepare_projection_volume(zero);
    ImportanceState st;
    auto rng = make_rng(10, "eval-validation");
    CHECK_THROWS_AS(expected_mse(terms, pv, scheme, st, 0, rng, bad), Error);
  }
}
