#include "core/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/fft.hpp"
#include "core/pose.hpp"

namespace cryoforge {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Streaming log-sum-exp accumulator (one-pass, max-rescaled).
struct LogSum {
  double max_log = kNegInf;
  double sum = 0;  // sum of exp(term - max_log)

  void add(double term) {
    if (term == kNegInf) return;
    if (term <= max_log) {
      sum += std::exp(term - max_log);
    } else {
      sum = sum * std::exp(max_log - term) + 1.0;
      max_log = term;
    }
  }
  double value() const { return max_log == kNegInf ? kNegInf : max_log + std::log(sum); }
};

// Mean of a nonnegative statistic under weights given in the log domain,
// max-rescaled in one pass alongside the log-sum-exp of the weights.
struct WeightedMean {
  double max_log = kNegInf;
  double wsum = 0;  // sum of exp(term - max_log)
  double stat = 0;  // sum of value * exp(term - max_log)

  void add(double term, double value) {
    if (term == kNegInf) return;
    if (term <= max_log) {
      double w = std::exp(term - max_log);
      wsum += w;
      stat += value * w;
    } else {
      double scale = std::exp(max_log - term);
      wsum = wsum * scale + 1.0;
      stat = stat * scale + value;
      max_log = term;
    }
  }
  double value() const { return wsum > 0 ? stat / wsum : 0.0; }
};

Mat3 orientation_rotation(const QuadratureScheme& scheme, int dir_idx, int psi_idx) {
  Pose p;
  p.direction = scheme.directions.points[dir_idx];
  p.inplane_angle = scheme.inplane.angles[psi_idx];
  return pose_to_rotation(p);
}

}  // namespace

ImageTerms make_image_terms(const Image& img, const CtfParams& ctf,
                            const QuadratureScheme& scheme, double sigma) {
  if (!(sigma > 0)) fail_usage("noise sigma must be positive");
  ctf.check();
  ImageTerms t;
  t.lattice = DiskLattice::make(img.n, img.pixel_size, scheme.rho);
  FourierImage spec = fft2(img, t.lattice);
  t.data = spec.v;
  t.sigma = sigma;
  t.data_norm2 = spec.norm2();
  t.log_norm_const = -0.5 * t.lattice->coefficient_count() * std::log(2 * kPi * sigma * sigma);

  size_t n_sites = t.lattice->sites.size();
  t.ctf.resize(n_sites);
  for (size_t s = 0; s < n_sites; ++s)
    t.ctf[s] = ctf_eval(ctf, t.lattice->freq(t.lattice->sites[s]).norm());

  double step = t.lattice->freq_step();
  t.unshifted.resize(scheme.shifts.points.size());
  for (size_t l = 0; l < scheme.shifts.points.size(); ++l) {
    const Vec2& sh = scheme.shifts.points[l];
    t.unshifted[l].resize(n_sites);
    for (size_t s = 0; s < n_sites; ++s) {
      const auto& site = t.lattice->sites[s];
      // S_{-t}: undo the forward model's phase so shifts decouple from slices
      double phase = 2 * kPi * step * (site.kx * sh.x + site.ky * sh.y);
      t.unshifted[l][s] = t.data[s] * cplx(std::cos(phase), std::sin(phase));
    }
  }
  return t;
}

FactorSelection full_direction_selection(const QuadratureScheme& scheme) {
  FactorSelection f;
  size_t m = scheme.directions.points.size();
  f.idx.resize(m);
  f.log_c.resize(m);
  for (size_t i = 0; i < m; ++i) {
    f.idx[i] = int(i);
    f.log_c[i] = std::log(scheme.directions.weights[i]);
  }
  return f;
}

FactorSelection full_inplane_selection(const QuadratureScheme& scheme) {
  FactorSelection f;
  size_t m = scheme.inplane.angles.size();
  f.idx.resize(m);
  f.log_c.resize(m);
  for (size_t i = 0; i < m; ++i) {
    f.idx[i] = int(i);
    f.log_c[i] = std::log(scheme.inplane.weights[i]);
  }
  return f;
}

FactorSelection full_shift_selection(const QuadratureScheme& scheme) {
  FactorSelection f;
  size_t m = scheme.shifts.points.size();
  f.idx.resize(m);
  f.log_c.resize(m);
  for (size_t i = 0; i < m; ++i) {
    f.idx[i] = int(i);
    f.log_c[i] = std::log(scheme.shifts.weights[i] * scheme.shifts.prior_values[i]);
  }
  return f;
}

MarginalResult marginal_over(const ImageTerms& terms, const PreparedVolume& vol,
                             const QuadratureScheme& scheme, const FactorSelection& dirs,
                             const FactorSelection& inplanes, const FactorSelection& shifts,
                             FourierVolume* grad_accum) {
  if (terms.lattice->rho != scheme.rho) fail_usage("image terms built for a different scheme");
  if (dirs.idx.empty() || inplanes.idx.empty() || shifts.idx.empty())
    fail_usage("empty factor selection");

  const size_t n_sites = terms.lattice->sites.size();
  const size_t nd = dirs.idx.size(), np = inplanes.idx.size(), ns = shifts.idx.size();
  const double inv_two_sigma2 = 1.0 / (2 * terms.sigma * terms.sigma);

  // Pass 1: per-pose log densities.
  std::vector<double> loglik(nd * np * ns);
  std::vector<cplx> model(n_sites), weighted(n_sites);
  std::vector<double> cross(ns);

  MarginalResult out;
  out.log_phi_dir.assign(nd, kNegInf);
  out.log_phi_inplane.assign(np, kNegInf);
  out.log_phi_shift.assign(ns, kNegInf);
  out.log_phi_orient.assign(nd * np, kNegInf);
  out.evaluated_poses = nd * np;

  std::vector<LogSum> phi_dir(nd), phi_psi(np), phi_shift(ns), phi_orient(nd * np);
  LogSum total;
  WeightedMean resid2_mean;

  for (size_t a = 0; a < nd; ++a) {
    for (size_t b = 0; b < np; ++b) {
      Mat3 rot = orientation_rotation(scheme, dirs.idx[a], inplanes.idx[b]);
      FourierImage slice = extract_slice(vol.spectrum, rot, terms.lattice, vol.kernel);
      double model_norm2 = 0;
      for (size_t s = 0; s < n_sites; ++s) {
        model[s] = vol.scale * terms.ctf[s] * slice.v[s];
        weighted[s] = terms.lattice->sites[s].mult * std::conj(model[s]);
        model_norm2 += (weighted[s] * model[s]).real();
      }
      for (size_t l = 0; l < ns; ++l) {
        const auto& u = terms.unshifted[shifts.idx[l]];
        double c = 0;
        for (size_t s = 0; s < n_sites; ++s)
          c += u[s].real() * weighted[s].real() - u[s].imag() * weighted[s].imag();
        cross[l] = c;
      }
      for (size_t l = 0; l < ns; ++l) {
        double resid2 = terms.data_norm2 + model_norm2 - 2 * cross[l];
        double lp = -resid2 * inv_two_sigma2 + terms.log_norm_const;
        loglik[(a * np + b) * ns + l] = lp;
        double term = dirs.log_c[a] + inplanes.log_c[b] + shifts.log_c[l] + lp;
        total.add(term);
        resid2_mean.add(term, std::max(0.0, resid2));
        phi_dir[a].add(inplanes.log_c[b] + shifts.log_c[l] + lp);
        phi_psi[b].add(dirs.log_c[a] + shifts.log_c[l] + lp);
        phi_shift[l].add(dirs.log_c[a] + inplanes.log_c[b] + lp);
        phi_orient[a * np + b].add(shifts.log_c[l] + lp);
      }
    }
  }

  out.log_marginal = total.value();
  out.expected_resid2 = resid2_mean.value();
  for (size_t a = 0; a < nd; ++a) out.log_phi_dir[a] = phi_dir[a].value();
  for (size_t b = 0; b < np; ++b) out.log_phi_inplane[b] = phi_psi[b].value();
  for (size_t l = 0; l < ns; ++l) out.log_phi_shift[l] = phi_shift[l].value();
  for (size_t j = 0; j < nd * np; ++j) out.log_phi_orient[j] = phi_orient[j].value();

  if (!grad_accum) return out;
  if (grad_accum->n != vol.spectrum.n)
    fail_usage("gradient accumulator does not match the prepared volume lattice");

  // Pass 2: responsibility-weighted residual scatter. For pose (a, b):
  //   G = (s / sigma^2) * CTF .* (rho_pose * model - sum_l r_l * unshifted_l)
  // where r are the softmax responsibilities of the evaluated triples.
  const double grad_scale = vol.scale * 2 * inv_two_sigma2;
  FourierImage pose_img(terms.lattice);
  for (size_t a = 0; a < nd; ++a) {
    for (size_t b = 0; b < np; ++b) {
      Mat3 rot = orientation_rotation(scheme, dirs.idx[a], inplanes.idx[b]);
      double rho_pose = 0;
      std::vector<double> r(ns);
      for (size_t l = 0; l < ns; ++l) {
        double term =
            dirs.log_c[a] + inplanes.log_c[b] + shifts.log_c[l] + loglik[(a * np + b) * ns + l];
        r[l] = std::exp(term - out.log_marginal);
        rho_pose += r[l];
      }
      if (rho_pose < 1e-300) continue;  // pose carries no responsibility
      FourierImage slice = extract_slice(vol.spectrum, rot, terms.lattice, vol.kernel);
      for (size_t s = 0; s < n_sites; ++s) {
        cplx acc = rho_pose * vol.scale * terms.ctf[s] * slice.v[s];
        for (size_t l = 0; l < ns; ++l)
          if (r[l] > 0) acc -= r[l] * terms.unshifted[shifts.idx[l]][s];
        pose_img.v[s] = grad_scale * terms.ctf[s] * acc;
      }
      adjoint_slice(pose_img, rot, *grad_accum, vol.kernel);
    }
  }
  return out;
}

double per_point_loglik(const FourierImage& img, const CtfParams& theta, const Mat3& rot,
                        const Vec2& shift, const PreparedVolume& vol, double sigma) {
  if (!(sigma > 0)) fail_usage("noise sigma must be positive");
  FourierImage model = forward_model(vol, rot, shift, theta, img.lattice);
  double resid2 = 0;
  for (size_t s = 0; s < img.lattice->sites.size(); ++s)
    resid2 += img.lattice->sites[s].mult * std::norm(img.v[s] - model.v[s]);
  double d = img.lattice->coefficient_count();
  return -resid2 / (2 * sigma * sigma) - 0.5 * d * std::log(2 * kPi * sigma * sigma);
}

MarginalResult exact_marginal(const Image& img, const CtfParams& theta, const PreparedVolume& vol,
                              const QuadratureScheme& scheme, double sigma) {
  ImageTerms terms = make_image_terms(img, theta, scheme, sigma);
  return marginal_over(terms, vol, scheme, full_direction_selection(scheme),
                       full_inplane_selection(scheme), full_shift_selection(scheme));
}

DensityVolume marginal_gradient(const Image& img, const CtfParams& theta,
                                const PreparedVolume& vol, const QuadratureScheme& scheme,
                                double sigma) {
  ImageTerms terms = make_image_terms(img, theta, scheme, sigma);
  FourierVolume scatter(vol.spectrum.n, vol.spectrum.voxel_size);
  marginal_over(terms, vol, scheme, full_direction_selection(scheme),
                full_inplane_selection(scheme), full_shift_selection(scheme), &scatter);
  return lift_scatter(scatter, vol);
}

DensityVolume lift_scatter(const FourierVolume& scatter, const PreparedVolume& vol) {
  if (scatter.n != vol.spectrum.n) fail_usage("scatter lattice does not match prepared volume");
  DensityVolume padded = ifft3(scatter);
  int n = vol.source_n, m = scatter.n;
  int cn = n / 2, cm = m / 2;
  DensityVolume out(n, scatter.voxel_size);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y) {
      double wzy = vol.inv_apod[z] * vol.inv_apod[y];
      for (int x = 0; x < n; ++x)
        out.at(x, y, z) =
            padded.at(x - cn + cm, y - cn + cm, z - cn + cm) * wzy * vol.inv_apod[x];
    }
  return out;
}

double estimate_noise_sigma(const Image& img, double particle_radius_a) {
  double c = img.n / 2.0;
  double r2 = particle_radius_a / img.pixel_size;
  r2 *= r2;
  double sum = 0, sum2 = 0;
  size_t count = 0;
  for (int y = 0; y < img.n; ++y)
    for (int x = 0; x < img.n; ++x) {
      double dx = x - c, dy = y - c;
      if (dx * dx + dy * dy <= r2) continue;
      double v = img.at(x, y);
      sum += v;
      sum2 += v * v;
      ++count;
    }
  if (count < 2) fail_data("no pixels outside the particle radius to estimate noise from");
  double mean = sum / count;
  double var = std::max(0.0, sum2 / count - mean * mean);
  return std::sqrt(var * count / (count - 1));
}

}  // namespace cryoforge
