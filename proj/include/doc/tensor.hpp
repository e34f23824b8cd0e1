#pragma once

// Dense 64-bit tensors and a reverse-mode gradient tape covering exactly
// the ops the DOC network needs: embedding lookup, valid 1-D convolution,
// max-over-time pooling, dense layers, ReLU, sigmoid, concatenation and
// scalar losses over a logit vector.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace doc {

using Shape = std::vector<std::size_t>;
using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;

std::size_t shape_size(const Shape& shape) noexcept;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  // Throws InputError when product(shape) != data.size().
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Element (i, j) of a rank-2 tensor.
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  // Contiguous slice for leading index i (a row of a matrix, one filter of
  // an F x w x e stack).
  std::span<double> slice(std::size_t i);
  std::span<const double> slice(std::size_t i) const;

  void fill(double value);
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Handle to a node recorded on a Tape.
struct Var {
  std::size_t index = 0;
};

// Computes a scalar loss from a logit vector and writes d(loss)/d(logits)
// into `grad` (same length as `logits`).
using LossFunction = std::function<double(std::span<const double> logits, std::span<double> grad)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Leaf that never receives a gradient.
  Var constant(Tensor value);
  // Leaf referencing external storage; the tensor must outlive the tape and
  // must not change while the tape is in use.
  Var parameter(const Tensor& value);
  Var parameter(Tensor&&) = delete;

  // ids (length L) into table (V x e) -> L x e. With pad_fixed, id 0 reads
  // as a zero row and never receives gradient.
  Var embed_lookup(std::span<const TokenId> ids, Var table, bool pad_fixed = true);
  // input (L x e), filters (F x w x e), bias (F) -> (L - w + 1) x F
  Var conv1d_valid(Var input, Var filters, Var bias);
  // T x F -> F. Ties route the gradient to the lowest time index.
  Var max_over_time(Var input);
  // weight (b x a) * input (a) + bias (b)
  Var dense(Var input, Var weight, Var bias);
  Var relu(Var input);
  Var sigmoid(Var input);
  // Concatenates rank-1 tensors in the given order.
  Var concat(std::span<const Var> parts);
  // Sum of scalar nodes, scaled: scale * sum(parts).
  Var sum_scalars(std::span<const Var> parts, double scale = 1.0);
  // Scalar function of every entry of the input (flattened row-major);
  // used for the classification losses over a logit vector.
  Var loss(Var input, LossFunction fn);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() root with respect to v. Zero for nodes
  // that are not on a path to the root.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }

  // Root must hold exactly one element.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }
  // Node indices in the order the last backward() visited them.
  const std::vector<std::size_t>& last_backward_order() const noexcept { return backward_order_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    bool requires_grad = false;
    Tensor grad;
    // Propagates this node's gradient into its inputs' gradients.
    std::function<void(Tape&, const Node&)> backward;

    const Tensor& value() const { return external ? *external : owned; }
  };

  Var push(Tensor value, bool requires_grad, std::function<void(Tape&, const Node&)> backward);
  Tensor& grad_mut(Var v) { return nodes_[v.index].grad; }
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
  bool has_gradients_ = false;
};

// Builds a scalar on the supplied tape from the given parameter handles.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var> params)>;

// Max over all parameter entries of
//   |analytic - central difference| / max(|analytic|, |numeric|, 1e-8).
// Parameters are perturbed in place and restored. Throws InputError for
// eps <= 0 or when f does not produce a scalar.
double grad_check(const ScalarFunction& f, std::span<Tensor* const> params, double eps);

}  // namespace doc
