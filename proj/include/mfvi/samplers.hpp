#ifndef MFVI_SAMPLERS_HPP
#define MFVI_SAMPLERS_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfvi/flows.hpp"
#include "mfvi/problem.hpp"

namespace mfvi {

/// Samples from a trained conditional flow at fixed y. Pure bookkeeping:
/// pushing the returned samples back through the x-lane recovers the latents.
inline std::vector<Vec2> flow_samples(const ConditionalFlow& g, const Vec2& y,
                                      std::size_t n, std::mt19937_64& rng) {
  if (n == 0) throw std::invalid_argument("flow_samples: n must be >= 1");
  NoGradGuard ng;
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> zv(2 * n);
  for (auto& v : zv) v = nd(rng);
  Tensor y_obs(1, 2, {y[0], y[1]});
  std::vector<Vec2> out;
  out.reserve(n);
  // Chunked so intermediate buffers stay small.
  const std::size_t chunk = 2048;
  std::size_t done = 0;
  while (done < n) {
    const std::size_t m = std::min(chunk, n - done);
    Tensor z(m, 2, std::vector<double>(zv.begin() + 2 * done,
                                       zv.begin() + 2 * (done + m)));
    Tensor x = g.posterior_sample(y_obs, z);
    for (std::size_t i = 0; i < m; ++i) out.push_back({x(i, 0), x(i, 1)});
    done += m;
  }
  return out;
}

struct SgldConfig {
  std::size_t n_steps = 2'200'000;
  double step_a = 4.0;       // eps_t = step_a * (step_b + t)^(-step_gamma)
  double step_b = 1e6;
  double step_gamma = 0.55;  // must lie in (0.5, 1]
  std::size_t burn_in = 100'000;
  std::size_t stride = 21;
  double noise_scale = 1.0;  // 0 turns the sampler into gradient ascent
};

struct Chain {
  std::vector<Vec2> samples;
  std::size_t burn_in = 0;
  std::size_t stride = 1;
  std::uint64_t seed = 0;
};

/// Langevin update x <- x + (eps/2) grad log pi(x) + N(0, eps I) with a
/// polynomially decaying step schedule. Full-batch gradients (the dataset is
/// a single observation).
inline Chain sgld(const std::function<Vec2(const Vec2&)>& log_target_grad,
                  Vec2 x0, const SgldConfig& cfg, std::mt19937_64& rng,
                  std::uint64_t seed_label = 0) {
  if (cfg.step_gamma <= 0.5 || cfg.step_gamma > 1.0)
    throw std::invalid_argument("sgld: step_gamma must lie in (0.5, 1]");
  if (cfg.n_steps <= cfg.burn_in)
    throw std::invalid_argument("sgld: n_steps must exceed burn_in");
  std::normal_distribution<double> nd(0.0, 1.0);
  Chain chain;
  chain.burn_in = cfg.burn_in;
  chain.stride = cfg.stride;
  chain.seed = seed_label;
  chain.samples.reserve((cfg.n_steps - cfg.burn_in) / cfg.stride + 1);

  Vec2 x = x0;
  for (std::size_t t = 0; t < cfg.n_steps; ++t) {
    const double eps =
        cfg.step_a * std::pow(cfg.step_b + double(t), -cfg.step_gamma);
    const Vec2 g = log_target_grad(x);
    const double nsd = cfg.noise_scale * std::sqrt(eps);
    x[0] += 0.5 * eps * g[0] + nsd * nd(rng);
    x[1] += 0.5 * eps * g[1] + nsd * nd(rng);
    if (!std::isfinite(x[0]) || !std::isfinite(x[1]))
      throw numeric_error("sgld: non-finite state at step " +
                          std::to_string(t));
    if (t >= cfg.burn_in && (t - cfg.burn_in) % cfg.stride == 0)
      chain.samples.push_back(x);
  }
  return chain;
}

/// grad of log pi_post(x) = -1/(2 sigma^2) ||Ax - y||^2 + rosenbrock_logpdf(x).
inline std::function<Vec2(const Vec2&)> posterior_log_grad(
    const Mat2& a, const Vec2& y, double sigma) {
  const double inv_var = 1.0 / (sigma * sigma);
  return [a, y, inv_var](const Vec2& x) {
    const Vec2 r = {a.apply(x)[0] - y[0], a.apply(x)[1] - y[1]};
    const Vec2 lik = a.apply_transpose(r);
    const Vec2 pg = rosenbrock_grad(x);
    return Vec2{pg[0] - inv_var * lik[0], pg[1] - inv_var * lik[1]};
  };
}

inline void samples_to_csv(const std::vector<Vec2>& samples,
                           const std::string& path,
                           const std::string& header_comment = "") {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("samples_to_csv: cannot open " + path);
  if (!header_comment.empty()) f << "# " << header_comment << "\n";
  f << "x1,x2\n";
  char buf[80];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", s[0], s[1]);
    f << buf;
  }
}

}  // namespace mfvi

#endif  // MFVI_SAMPLERS_HPP
