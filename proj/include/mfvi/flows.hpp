#ifndef MFVI_FLOWS_HPP
#define MFVI_FLOWS_HPP

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mfvi/tensor.hpp"

namespace mfvi {

struct FlowConfig {
  std::size_t blocks_per_lane = 8;
  std::size_t hidden_width = 64;
  double scale_clamp = 5.0;
};

/// Residual feed-forward net mapping (u1, condition) to one scale and one
/// shift per transformed coordinate. The final layer is zero-initialized so
/// a fresh flow is exactly the identity.
class Conditioner {
 public:
  Conditioner(std::size_t in_width, std::size_t cond_width,
              std::size_t transformed_width, std::size_t hidden,
              std::mt19937_64& rng)
      : in_w_(in_width), cond_w_(cond_width), out_w_(transformed_width),
        hidden_(hidden) {
    std::normal_distribution<double> nd(0.0, 1.0);
    auto init = [&](std::size_t r, std::size_t c, double sd) {
      std::vector<double> v(r * c);
      for (auto& x : v) x = sd * nd(rng);
      return Tensor(r, c, std::move(v), true);
    };
    const std::size_t in_total = in_w_ + cond_w_;
    w1_ = init(in_total, hidden_, 1.0 / std::sqrt(double(in_total)));
    b1_ = Tensor::zeros(1, hidden_, true);
    w2_ = init(hidden_, hidden_, 1.0 / std::sqrt(double(hidden_)));
    b2_ = Tensor::zeros(1, hidden_, true);
    w3_ = Tensor::zeros(hidden_, 2 * out_w_, true);
    b3_ = Tensor::zeros(1, 2 * out_w_, true);
  }

  std::size_t cond_width() const { return cond_w_; }

  /// Raw (unclamped) scale and shift, each [batch, transformed_width].
  std::pair<Tensor, Tensor> scale_shift(const Tensor& u1,
                                        const Tensor* cond) const {
    Tensor in = u1;
    if (cond_w_ > 0) {
      if (cond == nullptr || cond->cols() != cond_w_)
        throw shape_error("conditioner: condition width mismatch");
      in = concat_cols(u1, *cond);
    }
    if (in.cols() != in_w_ + cond_w_)
      throw shape_error("conditioner: input width mismatch");
    Tensor h1 = leaky_relu(add(matmul(in, w1_), b1_));
    Tensor h2 = add(leaky_relu(add(matmul(h1, w2_), b2_)), h1);
    Tensor out = add(matmul(h2, w3_), b3_);
    auto [s, t] = split_cols(out, out_w_);
    return {s, t};
  }

  void named_params(const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back(prefix + ".W1", w1_);
    out.emplace_back(prefix + ".b1", b1_);
    out.emplace_back(prefix + ".W2", w2_);
    out.emplace_back(prefix + ".b2", b2_);
    out.emplace_back(prefix + ".W3", w3_);
    out.emplace_back(prefix + ".b3", b3_);
  }

  Conditioner clone(bool requires_grad) const {
    Conditioner c(*this);
    c.w1_ = w1_.detach_copy(requires_grad);
    c.b1_ = b1_.detach_copy(requires_grad);
    c.w2_ = w2_.detach_copy(requires_grad);
    c.b2_ = b2_.detach_copy(requires_grad);
    c.w3_ = w3_.detach_copy(requires_grad);
    c.b3_ = b3_.detach_copy(requires_grad);
    return c;
  }

 private:
  std::size_t in_w_, cond_w_, out_w_, hidden_;
  Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

/// v1 = u1; v2 = u2 * exp(s(u1,c)) + t(u1,c); logdet = sum(s).
/// s is clamped through clamp*tanh(s/clamp) to keep exp(s) bounded.
class AffineCouplingLayer {
 public:
  AffineCouplingLayer(std::size_t w1, std::size_t w2, std::size_t cond_width,
                      std::size_t hidden, double clamp, std::mt19937_64& rng)
      : w1_(w1), w2_(w2), clamp_(clamp),
        conditioner_(w1, cond_width, w2, hidden, rng) {}

  std::size_t width() const { return w1_ + w2_; }

  std::pair<Tensor, Tensor> forward(const Tensor& u, const Tensor* cond) const {
    check_width(u);
    auto [u1, u2] = split_cols(u, w1_);
    Tensor s = clamped_scale(u1, cond);
    Tensor t = shift(u1, cond);
    Tensor v2 = add(mul(u2, mfvi::exp(s)), t);
    return {concat_cols(u1, v2), rowsum(s)};
  }

  /// Returned logdet is that of the inverse map (negative of forward's).
  std::pair<Tensor, Tensor> inverse(const Tensor& v, const Tensor* cond) const {
    check_width(v);
    auto [v1, v2] = split_cols(v, w1_);
    Tensor s = clamped_scale(v1, cond);
    Tensor t = shift(v1, cond);
    Tensor u2 = mul(sub(v2, t), mfvi::exp(scale(s, -1.0)));
    return {concat_cols(v1, u2), scale(rowsum(s), -1.0)};
  }

  void named_params(const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) const {
    conditioner_.named_params(prefix, out);
  }

  AffineCouplingLayer clone(bool requires_grad) const {
    AffineCouplingLayer c(*this);
    c.conditioner_ = conditioner_.clone(requires_grad);
    return c;
  }

 private:
  void check_width(const Tensor& u) const {
    if (u.cols() != width())
      throw shape_error("coupling: input width mismatch");
  }
  Tensor clamped_scale(const Tensor& u1, const Tensor* cond) const {
    auto [s, t] = conditioner_.scale_shift(u1, cond);
    (void)t;
    return scale(mfvi::tanh(scale(s, 1.0 / clamp_)), clamp_);
  }
  Tensor shift(const Tensor& u1, const Tensor* cond) const {
    auto [s, t] = conditioner_.scale_shift(u1, cond);
    (void)s;
    return t;
  }

  std::size_t w1_, w2_;
  double clamp_;
  Conditioner conditioner_;
};

namespace detail {

// Recursion over vector halves: couple across the halves, then recurse into
// each half until width <= 2. Width-1 subtrees carry no transformation.
struct RecNode {
  std::size_t width = 0;
  std::size_t first_width = 0;
  std::optional<AffineCouplingLayer> cross;
  std::unique_ptr<RecNode> left, right;

  static std::unique_ptr<RecNode> build(std::size_t width,
                                        std::size_t cond_width,
                                        std::size_t hidden, double clamp,
                                        std::mt19937_64& rng) {
    auto n = std::make_unique<RecNode>();
    n->width = width;
    if (width == 1) return n;
    const std::size_t w1 = (width + 1) / 2;
    const std::size_t w2 = width - w1;
    n->first_width = w1;
    n->cross.emplace(w1, w2, cond_width, hidden, clamp, rng);
    if (width > 2) {
      n->left = build(w1, cond_width, hidden, clamp, rng);
      n->right = build(w2, cond_width, hidden, clamp, rng);
    }
    return n;
  }

  std::pair<Tensor, Tensor> forward(const Tensor& u, const Tensor* cond) const {
    if (width == 1) return {u, Tensor::zeros(u.rows(), 1)};
    auto [v, ld] = cross->forward(u, cond);
    if (!left) return {v, ld};
    auto [v1, v2] = split_cols(v, first_width);
    auto [o1, l1] = left->forward(v1, cond);
    auto [o2, l2] = right->forward(v2, cond);
    return {concat_cols(o1, o2), add(add(ld, l1), l2)};
  }

  std::pair<Tensor, Tensor> inverse(const Tensor& v, const Tensor* cond) const {
    if (width == 1) return {v, Tensor::zeros(v.rows(), 1)};
    if (!left) return cross->inverse(v, cond);
    auto [v1, v2] = split_cols(v, first_width);
    auto [u1, l1] = left->inverse(v1, cond);
    auto [u2, l2] = right->inverse(v2, cond);
    auto [u, ld] = cross->inverse(concat_cols(u1, u2), cond);
    return {u, add(add(ld, l1), l2)};
  }

  void named_params(const std::string& prefix, std::size_t& counter,
                    std::vector<std::pair<std::string, Tensor>>& out) const {
    if (cross)
      cross->named_params(prefix + ".c" + std::to_string(counter++), out);
    if (left) {
      left->named_params(prefix, counter, out);
      right->named_params(prefix, counter, out);
    }
  }

  std::unique_ptr<RecNode> clone(bool requires_grad) const {
    auto n = std::make_unique<RecNode>();
    n->width = width;
    n->first_width = first_width;
    if (cross) n->cross = cross->clone(requires_grad);
    if (left) {
      n->left = left->clone(requires_grad);
      n->right = right->clone(requires_grad);
    }
    return n;
  }
};

}  // namespace detail

/// One hierarchical coupling block: fixed coordinate-reversal permutation at
/// entry, then the halving recursion. At width 2 this degenerates to a single
/// coupling across the two coordinates.
class RecursiveCouplingBlock {
 public:
  RecursiveCouplingBlock(std::size_t width, std::size_t cond_width,
                         std::size_t hidden, double clamp,
                         std::mt19937_64& rng)
      : width_(width),
        root_(detail::RecNode::build(width, cond_width, hidden, clamp, rng)) {}

  RecursiveCouplingBlock(const RecursiveCouplingBlock& o)
      : width_(o.width_), root_(o.root_->clone(false)) {}
  RecursiveCouplingBlock(RecursiveCouplingBlock&&) = default;
  RecursiveCouplingBlock& operator=(RecursiveCouplingBlock&&) = default;

  std::size_t width() const { return width_; }

  std::pair<Tensor, Tensor> forward(const Tensor& u, const Tensor* cond) const {
    return root_->forward(reverse_cols(u), cond);
  }

  std::pair<Tensor, Tensor> inverse(const Tensor& v, const Tensor* cond) const {
    auto [u, ld] = root_->inverse(v, cond);
    return {reverse_cols(u), ld};
  }

  void named_params(const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) const {
    std::size_t counter = 0;
    root_->named_params(prefix, counter, out);
  }

  RecursiveCouplingBlock clone(bool requires_grad) const {
    RecursiveCouplingBlock b(*this);
    b.root_ = root_->clone(requires_grad);
    return b;
  }

 private:
  std::size_t width_;
  std::unique_ptr<detail::RecNode> root_;
};

/// Composition of recursive coupling blocks over a fixed width, optionally
/// conditioned (every coupling's conditioner receives the condition vector).
class FlowStack {
 public:
  FlowStack(std::size_t width, std::size_t cond_width, const FlowConfig& cfg,
            std::mt19937_64& rng)
      : width_(width), cond_width_(cond_width) {
    blocks_.reserve(cfg.blocks_per_lane);
    for (std::size_t i = 0; i < cfg.blocks_per_lane; ++i)
      blocks_.emplace_back(width, cond_width, cfg.hidden_width,
                           cfg.scale_clamp, rng);
  }

  std::size_t width() const { return width_; }
  std::size_t cond_width() const { return cond_width_; }

  std::pair<Tensor, Tensor> forward(const Tensor& u,
                                    const Tensor* cond = nullptr) const {
    check(u, cond);
    Tensor z = u;
    Tensor ld = Tensor::zeros(u.rows(), 1);
    for (const auto& b : blocks_) {
      auto [zn, l] = b.forward(z, cond);
      z = zn;
      ld = add(ld, l);
    }
    return {z, ld};
  }

  /// Blocks applied in reverse order; returned logdet is the inverse map's.
  std::pair<Tensor, Tensor> inverse(const Tensor& z,
                                    const Tensor* cond = nullptr) const {
    check(z, cond);
    Tensor u = z;
    Tensor ld = Tensor::zeros(z.rows(), 1);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
      auto [un, l] = it->inverse(u, cond);
      u = un;
      ld = add(ld, l);
    }
    return {u, ld};
  }

  void named_params(const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].named_params(prefix + ".b" + std::to_string(i), out);
  }

  std::vector<Tensor> params() const {
    std::vector<std::pair<std::string, Tensor>> named;
    named_params("", named);
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (auto& [n, t] : named) out.push_back(t);
    return out;
  }

  FlowStack clone(bool requires_grad) const {
    FlowStack s(*this);
    s.blocks_.clear();
    for (const auto& b : blocks_) s.blocks_.push_back(b.clone(requires_grad));
    return s;
  }

 private:
  void check(const Tensor& u, const Tensor* cond) const {
    if (u.cols() != width_) throw shape_error("stack: input width mismatch");
    if (cond_width_ > 0) {
      if (cond == nullptr) throw shape_error("stack: condition required");
      if (cond->cols() != cond_width_ || cond->rows() != u.rows())
        throw shape_error("stack: condition shape mismatch");
    }
  }

  std::size_t width_, cond_width_;
  std::vector<RecursiveCouplingBlock> blocks_;
};

/// Block-triangular conditional flow: a y-lane over data space and an x-lane
/// over model space whose conditioners receive the y-lane output. The x-lane
/// is invertible in x for every fixed conditioning value, so its inverse at
/// fixed y is a posterior sampler.
class ConditionalFlow {
 public:
  ConditionalFlow(std::size_t dim_y, std::size_t dim_x, const FlowConfig& cfg,
                  std::mt19937_64& rng)
      : dim_y_(dim_y), dim_x_(dim_x),
        y_lane_(dim_y, 0, cfg, rng),
        x_lane_(dim_x, dim_y, cfg, rng) {}

  std::size_t dim_y() const { return dim_y_; }
  std::size_t dim_x() const { return dim_x_; }
  const FlowStack& y_lane() const { return y_lane_; }
  const FlowStack& x_lane() const { return x_lane_; }

  struct JointForward {
    Tensor z_y, z_x;
    Tensor logdet;  // [batch,1], y-lane + x-lane
  };

  JointForward conditional_forward(const Tensor& y, const Tensor& x) const {
    if (y.rows() != x.rows()) throw shape_error("conditional_forward: batch mismatch");
    auto [zy, ldy] = y_lane_.forward(y);
    auto [zx, ldx] = x_lane_.forward(x, &zy);
    return {zy, zx, add(ldy, ldx)};
  }

  /// y-lane output for a single observation, tiled to `rows` rows.
  Tensor conditioning(const Tensor& y, std::size_t rows) const {
    auto [zy, ld] = y_lane_.forward(y);
    (void)ld;
    return zy.rows() == rows ? zy : tile_rows(zy, rows);
  }

  struct SampleResult {
    Tensor x;
    Tensor logdet;  // [n,1], log|det dT/dz| of the latent-to-model map
  };

  /// x = x-lane inverse of z at conditioning G_y(y); z is [n, dim_x].
  SampleResult posterior_sample_with_logdet(const Tensor& y,
                                            const Tensor& z) const {
    Tensor cond = conditioning(y, z.rows());
    auto [x, ld] = x_lane_.inverse(z, &cond);
    return {x, ld};
  }

  Tensor posterior_sample(const Tensor& y, const Tensor& z) const {
    return posterior_sample_with_logdet(y, z).x;
  }

  void named_params(std::vector<std::pair<std::string, Tensor>>& out) const {
    y_lane_.named_params("y", out);
    x_lane_.named_params("x", out);
  }

  std::vector<Tensor> params() const {
    std::vector<std::pair<std::string, Tensor>> named;
    named_params(named);
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (auto& [n, t] : named) out.push_back(t);
    return out;
  }

  std::vector<Tensor> x_lane_params() const { return x_lane_.params(); }

  ConditionalFlow clone(bool requires_grad) const {
    ConditionalFlow g(*this);
    g.y_lane_ = y_lane_.clone(requires_grad);
    g.x_lane_ = x_lane_.clone(requires_grad);
    return g;
  }

 private:
  std::size_t dim_y_, dim_x_;
  FlowStack y_lane_, x_lane_;
};

/// Frozen snapshot of a pretrained conditional flow, evaluated only as a
/// conditional prior density. Parameters never receive gradients.
class FrozenPrior {
 public:
  explicit FrozenPrior(const ConditionalFlow& g) : flow_(g.clone(false)) {}

  /// log pi_z(G_x(y,x)) + log|det d/dx G_x(y,x)|, per row, including the
  /// -(d/2) log 2pi normal constant. Differentiable w.r.t. x only.
  Tensor logprob(const Tensor& y, const Tensor& x) const {
    Tensor cond = flow_.conditioning(y, x.rows());
    auto [zx, ldx] = flow_.x_lane().forward(x, &cond);
    const double c = -0.5 * double(flow_.dim_x()) * std::log(2.0 * M_PI);
    Tensor norm = scale(rowsq_norm(zx), -0.5);
    Tensor cterm = Tensor(x.rows(), 1, std::vector<double>(x.rows(), c));
    return add(add(norm, cterm), ldx);
  }

  const ConditionalFlow& flow() const { return flow_; }

 private:
  ConditionalFlow flow_;
};

struct PreconditionedPair {
  ConditionalFlow sampler;  // trainable deep copy (fine-tune the x-lane)
  FrozenPrior prior;        // immutable snapshot for prior evaluation
};

/// Warm start: a trainable deep copy of G plus a frozen snapshot used only
/// for conditional-prior evaluation. Mutating the copy never affects the
/// snapshot.
inline PreconditionedPair init_from_pretrained(const ConditionalFlow& g) {
  return {g.clone(true), FrozenPrior(g)};
}

}  // namespace mfvi

#endif  // MFVI_FLOWS_HPP
