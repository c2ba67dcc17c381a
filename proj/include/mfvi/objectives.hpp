#ifndef MFVI_OBJECTIVES_HPP
#define MFVI_OBJECTIVES_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "mfvi/adam.hpp"
#include "mfvi/flows.hpp"
#include "mfvi/problem.hpp"
#include "mfvi/tensor.hpp"
#include "mfvi/trace.hpp"

namespace mfvi {

struct NoiseModel {
  double sigma = 0.4;
};

/// Rowwise log prior density, [batch, dim_x] -> [batch, 1]. Differentiable
/// w.r.t. x.
using PriorLogProb = std::function<Tensor(const Tensor& x)>;

/// Unnormalized Rosenbrock log density as a differentiable expression.
inline Tensor rosenbrock_logpdf_tensor(const Tensor& x) {
  auto [x1, x2] = split_cols(x, 1);
  Tensor r = sub(x2, square(x1));
  return add(scale(square(x1), -0.5), scale(square(r), -1.0));
}

/// Normalization of exp(-x1^2/2 - (x2 - x1^2)^2): sqrt(2 pi) * sqrt(pi).
inline double rosenbrock_log_z() { return 0.5 * std::log(2.0 * M_PI * M_PI); }

/// Normalized density, so objective values are comparable with those using
/// flow-based (normalized) priors. The constant does not affect gradients.
inline PriorLogProb rosenbrock_prior() {
  return [](const Tensor& x) {
    const double z = rosenbrock_log_z();
    Tensor zt(x.rows(), 1, std::vector<double>(x.rows(), -z));
    return add(rosenbrock_logpdf_tensor(x), zt);
  };
}

/// Full standard-normal log density per row, constant included.
inline Tensor standard_normal_logpdf_rows(const Tensor& x) {
  const double c = -0.5 * double(x.cols()) * std::log(2.0 * M_PI);
  Tensor cterm(x.rows(), 1, std::vector<double>(x.rows(), c));
  return add(scale(rowsq_norm(x), -0.5), cterm);
}

inline PriorLogProb standard_normal_prior() {
  return [](const Tensor& x) { return standard_normal_logpdf_rows(x); };
}

/// Conditional prior from a frozen pretrained flow (never differentiable
/// w.r.t. the snapshot's weights).
inline PriorLogProb conditional_prior(const FrozenPrior& prior,
                                      const Tensor& y) {
  return [&prior, y](const Tensor& x) { return prior.logprob(y, x); };
}

inline double conditional_prior_logprob(const FrozenPrior& prior,
                                        const Vec2& y, const Vec2& x) {
  NoGradGuard ng;
  Tensor yt(1, 2, {y[0], y[1]});
  Tensor xt(1, 2, {x[0], x[1]});
  return prior.logprob(yt, xt).item();
}

/// Batch mean of 0.5*||G(y,x)||^2 - log|det dG/d(y,x)|.
inline Tensor mle_loss(const ConditionalFlow& g, const Tensor& y_batch,
                       const Tensor& x_batch) {
  if (y_batch.rows() == 0) throw std::invalid_argument("mle_loss: empty batch");
  auto fwd = g.conditional_forward(y_batch, x_batch);
  Tensor half_norm =
      scale(add(rowsq_norm(fwd.z_y), rowsq_norm(fwd.z_x)), 0.5);
  return mean(sub(half_norm, fwd.logdet));
}

/// Per-sample integrand of the variational objective:
/// 1/(2 sigma^2) ||A T(z) - y||^2 - log prior(T(z)) - log|det dT/dz|.
inline Tensor vi_integrand(const ConditionalFlow& sampler, const Mat2& a,
                           const Vec2& y, const PriorLogProb& prior,
                           const NoiseModel& noise, const Tensor& z_batch) {
  Tensor y_obs(1, 2, {y[0], y[1]});
  auto s = sampler.posterior_sample_with_logdet(y_obs, z_batch);
  Tensor at(2, 2, {a.a, a.c, a.b, a.d});  // right-multiplication by A^T
  Tensor resid = sub(matmul(s.x, at), y_obs);
  Tensor lik = scale(rowsq_norm(resid), 1.0 / (2.0 * noise.sigma * noise.sigma));
  return sub(sub(lik, prior(s.x)), s.logdet);
}

inline Tensor vi_loss(const ConditionalFlow& sampler, const Mat2& a,
                      const Vec2& y, const PriorLogProb& prior,
                      const NoiseModel& noise, const Tensor& z_batch) {
  if (z_batch.rows() == 0) throw std::invalid_argument("vi_loss: empty batch");
  return mean(vi_integrand(sampler, a, y, prior, noise, z_batch));
}

struct TrainOptions {
  int epochs = 25;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double decay = 0.9;
};

namespace detail {

inline Tensor gather_rows(const std::vector<Vec2>& rows,
                          const std::vector<std::size_t>& idx,
                          std::size_t lo, std::size_t hi) {
  std::vector<double> v;
  v.reserve(2 * (hi - lo));
  for (std::size_t i = lo; i < hi; ++i) {
    v.push_back(rows[idx[i]][0]);
    v.push_back(rows[idx[i]][1]);
  }
  return Tensor(hi - lo, 2, std::move(v));
}

}  // namespace detail

/// Shuffled mini-batch Adam on the conditional MLE objective with per-epoch
/// learning-rate decay. Deterministic under a fixed seed.
inline TrainingTrace train_mle(ConditionalFlow& g, const Dataset& data,
                               const TrainOptions& opts, std::uint64_t seed) {
  if (data.size() < opts.batch_size)
    throw std::invalid_argument("train_mle: dataset smaller than batch");
  Adam optim(g.params(), {opts.lr});
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);

  TrainingTrace trace;
  const auto t0 = std::chrono::steady_clock::now();
  long step = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, opts.lr, opts.decay);
    optim.set_lr(lr);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t lo = 0; lo + opts.batch_size <= data.size();
         lo += opts.batch_size) {
      Tensor yb = detail::gather_rows(data.y, idx, lo, lo + opts.batch_size);
      Tensor xb = detail::gather_rows(data.x, idx, lo, lo + opts.batch_size);
      Tensor loss = mle_loss(g, yb, xb);
      optim.zero_grad();
      backward(loss);
      optim.step();
      const double sec = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
      trace.rows.push_back({"mle", epoch, step++, loss.item(), lr, sec});
    }
  }
  return trace;
}

struct ViTrainOptions {
  std::size_t n_latent = 1000;
  int epochs = 5;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double decay = 0.9;
  std::string phase = "vi";
};

/// Adam on the variational objective over a fixed latent training set drawn
/// once per run and reshuffled each epoch. Only the x-lane is updated; the
/// y-lane stays at its initialization.
inline TrainingTrace train_vi(ConditionalFlow& sampler, const Mat2& a,
                              const Vec2& y, const PriorLogProb& prior,
                              const NoiseModel& noise,
                              const ViTrainOptions& opts, std::uint64_t seed) {
  if (opts.n_latent < opts.batch_size)
    throw std::invalid_argument("train_vi: latent set smaller than batch");
  Adam optim(sampler.x_lane_params(), {opts.lr});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Vec2> latents(opts.n_latent);
  for (auto& z : latents) z = {nd(rng), nd(rng)};
  std::vector<std::size_t> idx(opts.n_latent);
  std::iota(idx.begin(), idx.end(), 0);

  TrainingTrace trace;
  const auto t0 = std::chrono::steady_clock::now();
  long step = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, opts.lr, opts.decay);
    optim.set_lr(lr);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t lo = 0; lo + opts.batch_size <= opts.n_latent;
         lo += opts.batch_size) {
      Tensor zb = detail::gather_rows(latents, idx, lo, lo + opts.batch_size);
      Tensor loss = vi_loss(sampler, a, y, prior, noise, zb);
      optim.zero_grad();
      backward(loss);
      optim.step();
      const double sec = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
      trace.rows.push_back({opts.phase, epoch, step++, loss.item(), lr, sec});
    }
  }
  return trace;
}

}  // namespace mfvi

#endif  // MFVI_OBJECTIVES_HPP
