#ifndef MFVI_METRICS_HPP
#define MFVI_METRICS_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfvi/objectives.hpp"
#include "mfvi/problem.hpp"

namespace mfvi {

/// Monte Carlo estimate of the variational objective over fresh latent draws.
/// Equal to the KL divergence from the flow posterior to the target posterior
/// plus a constant independent of the flow, so values computed with the same
/// prior are directly comparable.
inline double kl_proxy(const ConditionalFlow& sampler, const Mat2& a,
                       const Vec2& y, const PriorLogProb& prior,
                       const NoiseModel& noise, std::size_t n,
                       std::mt19937_64& rng) {
  if (n < 10'000) throw std::invalid_argument("kl_proxy: need n >= 10^4");
  NoGradGuard ng;
  std::normal_distribution<double> nd(0.0, 1.0);
  double acc = 0.0;
  const std::size_t chunk = 2000;
  std::size_t done = 0;
  while (done < n) {
    const std::size_t m = std::min(chunk, n - done);
    std::vector<double> zv(2 * m);
    for (auto& v : zv) v = nd(rng);
    Tensor z(m, 2, std::move(zv));
    Tensor integ = vi_integrand(sampler, a, y, prior, noise, z);
    for (double v : integ.value()) acc += v;
    done += m;
  }
  const double value = acc / double(n);
  if (!std::isfinite(value)) throw numeric_error("kl_proxy: non-finite value");
  return value;
}

struct MomentReport {
  Vec2 mean{};
  double cov[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
};

/// Unbiased sample mean and covariance.
inline MomentReport moment_report(const std::vector<Vec2>& samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("moment_report: need >= 2 samples");
  MomentReport r;
  for (const auto& s : samples) {
    r.mean[0] += s[0];
    r.mean[1] += s[1];
  }
  r.mean[0] /= double(n);
  r.mean[1] /= double(n);
  for (const auto& s : samples) {
    const double d0 = s[0] - r.mean[0];
    const double d1 = s[1] - r.mean[1];
    r.cov[0][0] += d0 * d0;
    r.cov[0][1] += d0 * d1;
    r.cov[1][1] += d1 * d1;
  }
  const double inv = 1.0 / double(n - 1);
  r.cov[0][0] *= inv;
  r.cov[0][1] *= inv;
  r.cov[1][1] *= inv;
  r.cov[1][0] = r.cov[0][1];
  return r;
}

struct GridSpec {
  double x1_min = -8.0, x1_max = 8.0;
  double x2_min = -8.0, x2_max = 8.0;
  std::size_t n1 = 400, n2 = 400;
};

struct DensityGrid {
  GridSpec spec;
  std::vector<double> logp;  // row-major over (i1, i2)

  double x1(std::size_t i) const {
    return spec.x1_min + (spec.x1_max - spec.x1_min) * double(i) /
                             double(spec.n1 - 1);
  }
  double x2(std::size_t i) const {
    return spec.x2_min + (spec.x2_max - spec.x2_min) * double(i) /
                             double(spec.n2 - 1);
  }

  /// Trapezoidal integral of exp(logp) over the grid.
  double integral() const {
    const double h1 = (spec.x1_max - spec.x1_min) / double(spec.n1 - 1);
    const double h2 = (spec.x2_max - spec.x2_min) / double(spec.n2 - 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < spec.n1; ++i)
      for (std::size_t j = 0; j < spec.n2; ++j) {
        double w = 1.0;
        if (i == 0 || i == spec.n1 - 1) w *= 0.5;
        if (j == 0 || j == spec.n2 - 1) w *= 0.5;
        acc += w * std::exp(logp[i * spec.n2 + j]);
      }
    return acc * h1 * h2;
  }
};

inline DensityGrid density_grid(const std::function<double(const Vec2&)>& logpdf,
                                const GridSpec& spec) {
  DensityGrid g;
  g.spec = spec;
  g.logp.resize(spec.n1 * spec.n2);
  for (std::size_t i = 0; i < spec.n1; ++i)
    for (std::size_t j = 0; j < spec.n2; ++j)
      g.logp[i * spec.n2 + j] = logpdf({g.x1(i), g.x2(j)});
  return g;
}

/// Exact log density of the x-lane posterior flow at fixed y, by change of
/// variable through the forward map.
inline std::function<double(const Vec2&)> flow_logpdf(const ConditionalFlow& g,
                                                      const Vec2& y) {
  Tensor y_obs(1, 2, {y[0], y[1]});
  return [&g, y_obs](const Vec2& x) {
    NoGradGuard ng;
    Tensor cond = g.conditioning(y_obs, 1);
    Tensor xt(1, 2, {x[0], x[1]});
    auto [zx, ldx] = g.x_lane().forward(xt, &cond);
    const double z0 = zx(0, 0), z1 = zx(0, 1);
    return -std::log(2.0 * M_PI) - 0.5 * (z0 * z0 + z1 * z1) + ldx.item();
  };
}

/// Normalized mean and covariance of exp(logpdf) by trapezoidal quadrature;
/// independent ground truth for posterior moments at d=2.
inline MomentReport grid_quadrature_moments(
    const std::function<double(const Vec2&)>& logpdf, const GridSpec& spec) {
  const double h1 = (spec.x1_max - spec.x1_min) / double(spec.n1 - 1);
  const double h2 = (spec.x2_max - spec.x2_min) / double(spec.n2 - 1);
  double z = 0.0, m0 = 0.0, m1 = 0.0, c00 = 0.0, c01 = 0.0, c11 = 0.0;
  // First pass finds the max for a stable exponential shift.
  double lmax = -1e300;
  for (std::size_t i = 0; i < spec.n1; ++i)
    for (std::size_t j = 0; j < spec.n2; ++j) {
      const Vec2 p = {spec.x1_min + h1 * double(i), spec.x2_min + h2 * double(j)};
      lmax = std::max(lmax, logpdf(p));
    }
  for (std::size_t i = 0; i < spec.n1; ++i)
    for (std::size_t j = 0; j < spec.n2; ++j) {
      const Vec2 p = {spec.x1_min + h1 * double(i), spec.x2_min + h2 * double(j)};
      double w = std::exp(logpdf(p) - lmax);
      if (i == 0 || i == spec.n1 - 1) w *= 0.5;
      if (j == 0 || j == spec.n2 - 1) w *= 0.5;
      z += w;
      m0 += w * p[0];
      m1 += w * p[1];
      c00 += w * p[0] * p[0];
      c01 += w * p[0] * p[1];
      c11 += w * p[1] * p[1];
    }
  MomentReport r;
  r.mean = {m0 / z, m1 / z};
  r.cov[0][0] = c00 / z - r.mean[0] * r.mean[0];
  r.cov[0][1] = c01 / z - r.mean[0] * r.mean[1];
  r.cov[1][0] = r.cov[0][1];
  r.cov[1][1] = c11 / z - r.mean[1] * r.mean[1];
  return r;
}

struct KlReport {
  double gamma = 0.0;
  double kl_low_fidelity = 0.0;
  double kl_scratch = 0.0;
  double kl_preconditioned = 0.0;
  std::size_t n_eval_samples = 0;
  std::uint64_t seed = 0;
};

inline void kl_table_to_csv(const std::vector<KlReport>& rows,
                            const std::string& path,
                            const std::string& header_comment = "") {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("kl_table_to_csv: cannot open " + path);
  if (!header_comment.empty()) f << "# " << header_comment << "\n";
  f << "gamma,kl_low,kl_scratch,kl_precond,n_eval,seed\n";
  char buf[200];
  for (const auto& r : rows) {
    // 4 significant digits on the KL columns.
    std::snprintf(buf, sizeof(buf), "%g,%.4g,%.4g,%.4g,%zu,%llu\n", r.gamma,
                  r.kl_low_fidelity, r.kl_scratch, r.kl_preconditioned,
                  r.n_eval_samples,
                  static_cast<unsigned long long>(r.seed));
    f << buf;
  }
}

inline void density_grid_to_csv(const DensityGrid& g, const std::string& path,
                                const std::string& header_comment = "") {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("density_grid_to_csv: cannot open " + path);
  if (!header_comment.empty()) f << "# " << header_comment << "\n";
  f << "x1,x2,logp\n";
  char buf[120];
  for (std::size_t i = 0; i < g.spec.n1; ++i)
    for (std::size_t j = 0; j < g.spec.n2; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", g.x1(i), g.x2(j),
                    g.logp[i * g.spec.n2 + j]);
      f << buf;
    }
}

}  // namespace mfvi

#endif  // MFVI_METRICS_HPP
