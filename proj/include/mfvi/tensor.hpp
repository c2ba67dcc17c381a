#ifndef MFVI_TENSOR_HPP
#define MFVI_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace mfvi {

struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

// One node of the dynamically recorded computation. The record is rebuilt on
// every forward evaluation; topological order follows from construction since
// a node's parents always exist before the node itself.
struct TapeNode {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TapeNode>> parents;
  std::function<void(TapeNode&)> backprop;

  std::size_t size() const { return rows * cols; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

inline void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x))
      throw numeric_error(std::string("non-finite value produced by op '") +
                          op + "'");
  }
}

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables gradient recording in scope; evaluation-only passes skip the tape.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Dense 2-D real array participating in reverse-mode differentiation.
/// Row vectors are tensors with rows()==1; batches stack along rows.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
         bool requires_grad = false)
      : node_(std::make_shared<detail::TapeNode>()) {
    if (values.size() != rows * cols)
      throw shape_error("tensor: value count does not match shape");
    detail::check_finite("leaf", values);
    node_->rows = rows;
    node_->cols = cols;
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->ensure_grad();
  }

  static Tensor zeros(std::size_t rows, std::size_t cols,
                      bool requires_grad = false) {
    return Tensor(rows, cols, std::vector<double>(rows * cols, 0.0),
                  requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(1, 1, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& value() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }

  double item() const {
    if (size() != 1) throw shape_error("item: tensor is not scalar");
    return node_->value[0];
  }

  double operator()(std::size_t r, std::size_t c) const {
    return node_->value[r * cols() + c];
  }

  void zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->size(), 0.0);
  }

  /// In-place parameter update; does not touch the tape.
  void update_values(const std::vector<double>& v) {
    if (v.size() != node_->value.size())
      throw shape_error("update_values: size mismatch");
    node_->value = v;
  }

  /// Detached copy: fresh leaf with the same values.
  Tensor detach_copy(bool requires_grad) const {
    return Tensor(rows(), cols(), node_->value, requires_grad);
  }

  std::shared_ptr<detail::TapeNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TapeNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TapeNode> node_;

  friend Tensor make_op(const char* op, std::size_t rows, std::size_t cols,
                        std::vector<double> values,
                        std::vector<Tensor> parents,
                        std::function<void(detail::TapeNode&)> backprop);
  friend void backward(const Tensor& root);
};

inline Tensor make_op(const char* op, std::size_t rows, std::size_t cols,
                      std::vector<double> values, std::vector<Tensor> parents,
                      std::function<void(detail::TapeNode&)> backprop) {
  detail::check_finite(op, values);
  auto n = std::make_shared<detail::TapeNode>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(values);
  n->op = op;
  bool any_grad = false;
  if (detail::grad_mode())
    for (const auto& p : parents) any_grad = any_grad || p.requires_grad();
  if (any_grad) {
    n->requires_grad = true;
    n->ensure_grad();
    for (auto& p : parents) {
      n->parents.push_back(p.node());
      p.node()->ensure_grad();
    }
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

/// Reverse pass from a scalar root. Gradients accumulate additively into
/// every leaf with requires_grad; call zero_grad on parameters between steps.
inline void backward(const Tensor& root) {
  if (root.size() != 1) throw shape_error("backward: root must be scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; reversed post-order is a valid topological
  // order of the recorded computation.
  std::vector<detail::TapeNode*> order;
  std::unordered_set<detail::TapeNode*> seen;
  std::vector<std::pair<detail::TapeNode*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      detail::TapeNode* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TapeNode* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

namespace detail {
inline void require_same_shape(const char* op, const Tensor& a,
                               const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw shape_error(std::string(op) + ": shape mismatch");
}
}  // namespace detail

/// Elementwise add; b may be a single row broadcast across a's rows.
inline Tensor add(const Tensor& a, const Tensor& b) {
  const bool bcast = (b.rows() == 1 && a.rows() != 1);
  if (!bcast) detail::require_same_shape("add", a, b);
  if (bcast && a.cols() != b.cols()) throw shape_error("add: column mismatch");
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      out[r * a.cols() + c] = a(r, c) + b(bcast ? 0 : r, c);
  return make_op("add", a.rows(), a.cols(), std::move(out), {a, b},
                 [](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   auto& pb = *n.parents[1];
                   const bool bc = pb.rows == 1 && pa.rows != 1;
                   for (std::size_t r = 0; r < n.rows; ++r)
                     for (std::size_t c = 0; c < n.cols; ++c) {
                       double g = n.grad[r * n.cols + c];
                       if (pa.requires_grad) pa.grad[r * n.cols + c] += g;
                       if (pb.requires_grad)
                         pb.grad[(bc ? 0 : r) * n.cols + c] += g;
                     }
                 });
}

/// Elementwise subtract; b may be a single row broadcast across a's rows.
inline Tensor sub(const Tensor& a, const Tensor& b) {
  const bool bcast = (b.rows() == 1 && a.rows() != 1);
  if (!bcast) detail::require_same_shape("sub", a, b);
  if (bcast && a.cols() != b.cols()) throw shape_error("sub: column mismatch");
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      out[r * a.cols() + c] = a(r, c) - b(bcast ? 0 : r, c);
  return make_op("sub", a.rows(), a.cols(), std::move(out), {a, b},
                 [](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   auto& pb = *n.parents[1];
                   const bool bc = pb.rows == 1 && pa.rows != 1;
                   for (std::size_t r = 0; r < n.rows; ++r)
                     for (std::size_t c = 0; c < n.cols; ++c) {
                       double g = n.grad[r * n.cols + c];
                       if (pa.requires_grad) pa.grad[r * n.cols + c] += g;
                       if (pb.requires_grad)
                         pb.grad[(bc ? 0 : r) * n.cols + c] -= g;
                     }
                 });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = a.value()[i] * b.value()[i];
  return make_op("mul", a.rows(), a.cols(), std::move(out), {a, b},
                 [](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   auto& pb = *n.parents[1];
                   for (std::size_t i = 0; i < n.size(); ++i) {
                     if (pa.requires_grad) pa.grad[i] += n.grad[i] * pb.value[i];
                     if (pb.requires_grad) pb.grad[i] += n.grad[i] * pa.value[i];
                   }
                 });
}

/// Matrix product: [p,q] x [q,r] -> [p,r]. Covers matrix-vector products via
/// single-row/column operands.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw shape_error("matmul: inner dim mismatch");
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  std::vector<double> out(p * r, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a.value()[i * q + k];
      for (std::size_t j = 0; j < r; ++j)
        out[i * r + j] += aik * b.value()[k * r + j];
    }
  return make_op(
      "matmul", p, r, std::move(out), {a, b}, [](detail::TapeNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        const std::size_t p = pa.rows, q = pa.cols, r = pb.cols;
        if (pa.requires_grad) {  // dA = dC * B^T
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < r; ++j) {
              const double g = n.grad[i * r + j];
              for (std::size_t k = 0; k < q; ++k)
                pa.grad[i * q + k] += g * pb.value[k * r + j];
            }
        }
        if (pb.requires_grad) {  // dB = A^T * dC
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t k = 0; k < q; ++k) {
              const double a = pa.value[i * q + k];
              for (std::size_t j = 0; j < r; ++j)
                pb.grad[k * r + j] += a * n.grad[i * r + j];
            }
        }
      });
}

inline Tensor exp(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::exp(a.value()[i]);
  return make_op("exp", a.rows(), a.cols(), std::move(out), {a},
                 [](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   for (std::size_t i = 0; i < n.size(); ++i)
                     pa.grad[i] += n.grad[i] * n.value[i];
                 });
}

inline Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.value()[i] <= 0.0)
      throw numeric_error("log: non-positive input");
    out[i] = std::log(a.value()[i]);
  }
  return make_op("log", a.rows(), a.cols(), std::move(out), {a},
                 [](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   for (std::size_t i = 0; i < n.size(); ++i)
                     pa.grad[i] += n.grad[i] / pa.value[i];
                 });
}

inline Tensor square(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = a.value()[i] * a.value()[i];
  return make_op("square", a.rows(), a.cols(), std::move(out), {a},
                 [](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   for (std::size_t i = 0; i < n.size(); ++i)
                     pa.grad[i] += n.grad[i] * 2.0 * pa.value[i];
                 });
}

inline Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a.value()[i]);
  return make_op("tanh", a.rows(), a.cols(), std::move(out), {a},
                 [](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   for (std::size_t i = 0; i < n.size(); ++i)
                     pa.grad[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
                 });
}

inline Tensor leaky_relu(const Tensor& a, double slope = 0.01) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double x = a.value()[i];
    out[i] = x >= 0.0 ? x : slope * x;
  }
  return make_op("leaky_relu", a.rows(), a.cols(), std::move(out), {a},
                 [slope](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   for (std::size_t i = 0; i < n.size(); ++i)
                     pa.grad[i] +=
                         n.grad[i] * (pa.value[i] >= 0.0 ? 1.0 : slope);
                 });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = c * a.value()[i];
  return make_op("scale", a.rows(), a.cols(), std::move(out), {a},
                 [c](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   for (std::size_t i = 0; i < n.size(); ++i)
                     pa.grad[i] += c * n.grad[i];
                 });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw shape_error("concat_cols: row mismatch");
  const std::size_t ca = a.cols(), cb = b.cols(), cc = ca + cb;
  std::vector<double> out(a.rows() * cc);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < ca; ++c) out[r * cc + c] = a(r, c);
    for (std::size_t c = 0; c < cb; ++c) out[r * cc + ca + c] = b(r, c);
  }
  return make_op("concat_cols", a.rows(), cc, std::move(out), {a, b},
                 [ca, cb](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   auto& pb = *n.parents[1];
                   const std::size_t cc = ca + cb;
                   for (std::size_t r = 0; r < n.rows; ++r) {
                     if (pa.requires_grad)
                       for (std::size_t c = 0; c < ca; ++c)
                         pa.grad[r * ca + c] += n.grad[r * cc + c];
                     if (pb.requires_grad)
                       for (std::size_t c = 0; c < cb; ++c)
                         pb.grad[r * cb + c] += n.grad[r * cc + ca + c];
                   }
                 });
}

/// Column slice [col0, col0+width).
inline Tensor slice_cols(const Tensor& a, std::size_t col0,
                         std::size_t width) {
  if (col0 + width > a.cols()) throw shape_error("slice_cols: out of range");
  std::vector<double> out(a.rows() * width);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = a(r, col0 + c);
  return make_op("slice_cols", a.rows(), width, std::move(out), {a},
                 [col0, width](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   for (std::size_t r = 0; r < n.rows; ++r)
                     for (std::size_t c = 0; c < width; ++c)
                       pa.grad[r * pa.cols + col0 + c] +=
                           n.grad[r * width + c];
                 });
}

inline std::pair<Tensor, Tensor> split_cols(const Tensor& a,
                                            std::size_t first_width) {
  if (first_width == 0 || first_width >= a.cols())
    throw shape_error("split_cols: invalid split point");
  return {slice_cols(a, 0, first_width),
          slice_cols(a, first_width, a.cols() - first_width)};
}

/// Reverses column order (self-inverse permutation, unit Jacobian).
inline Tensor reverse_cols(const Tensor& a) {
  std::vector<double> out(a.size());
  const std::size_t cc = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < cc; ++c)
      out[r * cc + c] = a(r, cc - 1 - c);
  return make_op("reverse_cols", a.rows(), cc, std::move(out), {a},
                 [](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   const std::size_t cc = n.cols;
                   for (std::size_t r = 0; r < n.rows; ++r)
                     for (std::size_t c = 0; c < cc; ++c)
                       pa.grad[r * cc + cc - 1 - c] += n.grad[r * cc + c];
                 });
}

/// Repeats a single-row tensor across `rows` rows.
inline Tensor tile_rows(const Tensor& a, std::size_t rows) {
  if (a.rows() != 1) throw shape_error("tile_rows: input must be one row");
  std::vector<double> out(rows * a.cols());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[r * a.cols() + c] = a(0, c);
  return make_op("tile_rows", rows, a.cols(), std::move(out), {a},
                 [](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   for (std::size_t r = 0; r < n.rows; ++r)
                     for (std::size_t c = 0; c < n.cols; ++c)
                       pa.grad[c] += n.grad[r * n.cols + c];
                 });
}

/// Per-row sum: [r,c] -> [r,1].
inline Tensor rowsum(const Tensor& a) {
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[r] += a(r, c);
  return make_op("rowsum", a.rows(), 1, std::move(out), {a},
                 [](detail::TapeNode& n) {
                   auto& pa = *n.parents[0];
                   for (std::size_t r = 0; r < n.rows; ++r)
                     for (std::size_t c = 0; c < pa.cols; ++c)
                       pa.grad[r * pa.cols + c] += n.grad[r];
                 });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  return make_op("sum", 1, 1, {s}, {a}, [](detail::TapeNode& n) {
    auto& pa = *n.parents[0];
    for (std::size_t i = 0; i < pa.value.size(); ++i) pa.grad[i] += n.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  return make_op("mean", 1, 1, {s * inv}, {a}, [inv](detail::TapeNode& n) {
    auto& pa = *n.parents[0];
    for (std::size_t i = 0; i < pa.value.size(); ++i)
      pa.grad[i] += n.grad[0] * inv;
  });
}

/// Per-row squared Euclidean norm: [r,c] -> [r,1].
inline Tensor rowsq_norm(const Tensor& a) { return rowsum(square(a)); }

}  // namespace mfvi

#endif  // MFVI_TENSOR_HPP
