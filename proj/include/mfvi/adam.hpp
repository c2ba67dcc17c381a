#ifndef MFVI_ADAM_HPP
#define MFVI_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "mfvi/tensor.hpp"

namespace mfvi {

/// base_lr * decay^epoch.
inline double lr_schedule(int epoch, double base_lr, double decay) {
  return base_lr * std::pow(decay, epoch);
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias-corrected moments over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  std::int64_t step_count() const { return t_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      const auto& g = p.grad();
      std::vector<double> values = p.value();
      for (std::size_t j = 0; j < values.size(); ++j) {
        m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
        v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        values[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
      p.update_values(values);
    }
  }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace mfvi

#endif  // MFVI_ADAM_HPP
