#include "doc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "doc/errors.hpp"
#include "doc/math.hpp"
#include "doc/simd.hpp"

namespace doc {
namespace {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw InputError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got shape " + shape_string(t.shape()));
  }
}

}  // namespace

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw InputError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::span<double> Tensor::slice(std::size_t i) {
  const std::size_t stride = shape_.empty() ? 0 : data_.size() / shape_[0];
  return std::span<double>(data_).subspan(i * stride, stride);
}

std::span<const double> Tensor::slice(std::size_t i) const {
  const std::size_t stride = shape_.empty() ? 0 : data_.size() / shape_[0];
  return std::span<const double>(data_).subspan(i * stride, stride);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// Tape

void Tape::check(Var v) const {
  if (v.index >= nodes_.size()) throw InputError("tape: unknown variable");
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&, const Node&)> backward) {
  Node node;
  node.owned = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  has_gradients_ = false;
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(const Tensor& value) {
  Node node;
  node.external = &value;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  has_gradients_ = false;
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[v.index].value();
}

const Tensor& Tape::grad(Var v) const {
  check(v);
  if (!has_gradients_) throw InputError("tape: grad() requested before backward()");
  return nodes_[v.index].grad;
}

Var Tape::embed_lookup(std::span<const TokenId> ids, Var table_var, bool pad_fixed) {
  check(table_var);
  const Tensor& table = value(table_var);
  require_rank(table, 2, "embed_lookup", "table");
  const std::size_t vocab = table.dim(0);
  const std::size_t width = table.dim(1);
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw InputError("embed_lookup: token id " + std::to_string(id) + " outside [0, " +
                       std::to_string(vocab) + ")");
    }
  }
  Tensor out({ids.size(), width});
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (pad_fixed && ids[j] == kPadId) continue;
    const auto src = table.slice(static_cast<std::size_t>(ids[j]));
    std::copy(src.begin(), src.end(), out.slice(j).begin());
  }
  std::vector<TokenId> kept(ids.begin(), ids.end());
  return push(std::move(out), requires_grad(table_var),
              [table_var, kept = std::move(kept), pad_fixed](Tape& tape, const Node& self) {
                Tensor& g = tape.grad_mut(table_var);
                for (std::size_t j = 0; j < kept.size(); ++j) {
                  if (pad_fixed && kept[j] == kPadId) continue;
                  simd::axpy(1.0, self.grad.slice(j), g.slice(static_cast<std::size_t>(kept[j])));
                }
              });
}

Var Tape::conv1d_valid(Var input_var, Var filters_var, Var bias_var) {
  check(input_var);
  check(filters_var);
  check(bias_var);
  const Tensor& input = value(input_var);
  const Tensor& filters = value(filters_var);
  const Tensor& bias = value(bias_var);
  require_rank(input, 2, "conv1d_valid", "input");
  require_rank(filters, 3, "conv1d_valid", "filters");
  require_rank(bias, 1, "conv1d_valid", "bias");
  const std::size_t len = input.dim(0);
  const std::size_t width = input.dim(1);
  const std::size_t count = filters.dim(0);
  const std::size_t span = filters.dim(1);
  if (filters.dim(2) != width || bias.dim(0) != count) {
    throw InputError("conv1d_valid: filters " + shape_string(filters.shape()) + " and bias " +
                     shape_string(bias.shape()) + " do not fit input " + shape_string(input.shape()));
  }
  if (span == 0 || len < span) {
    throw InputError("conv1d_valid: input length " + std::to_string(len) + " shorter than filter width " +
                     std::to_string(span));
  }
  const std::size_t steps = len - span + 1;
  const std::size_t window = span * width;
  Tensor out({steps, count});
  const auto in = input.data();
  for (std::size_t t = 0; t < steps; ++t) {
    const auto patch = in.subspan(t * width, window);
    for (std::size_t f = 0; f < count; ++f) {
      out.at(t, f) = bias[f] + simd::dot(patch, filters.slice(f));
    }
  }
  const bool needs = requires_grad(input_var) || requires_grad(filters_var) || requires_grad(bias_var);
  return push(std::move(out), needs,
              [input_var, filters_var, bias_var, steps, count, width, window](Tape& tape, const Node& self) {
                const Tensor& input = tape.value(input_var);
                const Tensor& filters = tape.value(filters_var);
                const bool want_input = tape.requires_grad(input_var);
                const bool want_filters = tape.requires_grad(filters_var);
                const bool want_bias = tape.requires_grad(bias_var);
                Tensor& g_in = tape.grad_mut(input_var);
                Tensor& g_filters = tape.grad_mut(filters_var);
                Tensor& g_bias = tape.grad_mut(bias_var);
                for (std::size_t t = 0; t < steps; ++t) {
                  for (std::size_t f = 0; f < count; ++f) {
                    const double g = self.grad.at(t, f);
                    if (g == 0.0) continue;
                    if (want_bias) g_bias[f] += g;
                    if (want_filters) simd::axpy(g, input.data().subspan(t * width, window), g_filters.slice(f));
                    if (want_input) simd::axpy(g, filters.slice(f), g_in.data().subspan(t * width, window));
                  }
                }
              });
}

Var Tape::max_over_time(Var input_var) {
  check(input_var);
  const Tensor& input = value(input_var);
  require_rank(input, 2, "max_over_time", "input");
  const std::size_t steps = input.dim(0);
  const std::size_t count = input.dim(1);
  if (steps == 0) throw InputError("max_over_time: empty time axis");
  Tensor out({count});
  std::vector<std::size_t> argmax(count, 0);
  for (std::size_t f = 0; f < count; ++f) {
    double best = input.at(0, f);
    for (std::size_t t = 1; t < steps; ++t) {
      if (input.at(t, f) > best) {
        best = input.at(t, f);
        argmax[f] = t;
      }
    }
    out[f] = best;
  }
  return push(std::move(out), requires_grad(input_var),
              [input_var, argmax = std::move(argmax)](Tape& tape, const Node& self) {
                Tensor& g = tape.grad_mut(input_var);
                for (std::size_t f = 0; f < argmax.size(); ++f) g.at(argmax[f], f) += self.grad[f];
              });
}

Var Tape::dense(Var input_var, Var weight_var, Var bias_var) {
  check(input_var);
  check(weight_var);
  check(bias_var);
  const Tensor& input = value(input_var);
  const Tensor& weight = value(weight_var);
  const Tensor& bias = value(bias_var);
  require_rank(input, 1, "dense", "input");
  require_rank(weight, 2, "dense", "weight");
  require_rank(bias, 1, "dense", "bias");
  const std::size_t outputs = weight.dim(0);
  if (weight.dim(1) != input.dim(0) || bias.dim(0) != outputs) {
    throw InputError("dense: weight " + shape_string(weight.shape()) + ", bias " + shape_string(bias.shape()) +
                     " and input " + shape_string(input.shape()) + " do not conform");
  }
  Tensor out({outputs});
  for (std::size_t i = 0; i < outputs; ++i) out[i] = simd::dot(weight.slice(i), input.data()) + bias[i];
  const bool needs = requires_grad(input_var) || requires_grad(weight_var) || requires_grad(bias_var);
  return push(std::move(out), needs, [input_var, weight_var, bias_var, outputs](Tape& tape, const Node& self) {
    const Tensor& input = tape.value(input_var);
    const Tensor& weight = tape.value(weight_var);
    const bool want_input = tape.requires_grad(input_var);
    const bool want_weight = tape.requires_grad(weight_var);
    const bool want_bias = tape.requires_grad(bias_var);
    Tensor& g_in = tape.grad_mut(input_var);
    Tensor& g_weight = tape.grad_mut(weight_var);
    Tensor& g_bias = tape.grad_mut(bias_var);
    for (std::size_t i = 0; i < outputs; ++i) {
      const double g = self.grad[i];
      if (g == 0.0) continue;
      if (want_bias) g_bias[i] += g;
      if (want_weight) simd::axpy(g, input.data(), g_weight.slice(i));
      if (want_input) simd::axpy(g, weight.slice(i), g_in.data());
    }
  });
}

Var Tape::relu(Var input_var) {
  check(input_var);
  Tensor out = value(input_var);
  for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
  return push(std::move(out), requires_grad(input_var), [input_var](Tape& tape, const Node& self) {
    const Tensor& input = tape.value(input_var);
    Tensor& g = tape.grad_mut(input_var);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (input[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var Tape::sigmoid(Var input_var) {
  check(input_var);
  Tensor out = value(input_var);
  for (double& x : out.data()) x = stable_sigmoid(x);
  return push(std::move(out), requires_grad(input_var), [input_var](Tape& tape, const Node& self) {
    Tensor& g = tape.grad_mut(input_var);
    const Tensor& s = self.value();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s[i] * (1.0 - s[i]);
  });
}

Var Tape::concat(std::span<const Var> parts) {
  std::size_t total = 0;
  bool needs = false;
  for (Var p : parts) {
    check(p);
    require_rank(value(p), 1, "concat", "part");
    total += value(p).size();
    needs = needs || requires_grad(p);
  }
  Tensor out({total});
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto src = value(p).data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += src.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), needs, [inputs = std::move(inputs)](Tape& tape, const Node& self) {
    std::size_t offset = 0;
    for (Var p : inputs) {
      Tensor& g = tape.grad_mut(p);
      const std::size_t n = g.size();
      if (tape.requires_grad(p)) simd::axpy(1.0, self.grad.data().subspan(offset, n), g.data());
      offset += n;
    }
  });
}

Var Tape::sum_scalars(std::span<const Var> parts, double scale) {
  double total = 0.0;
  bool needs = false;
  for (Var p : parts) {
    check(p);
    if (value(p).size() != 1) throw InputError("sum_scalars: part is not a scalar");
    total += value(p)[0];
    needs = needs || requires_grad(p);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(Tensor({1}, scale * total), needs, [inputs = std::move(inputs), scale](Tape& tape, const Node& self) {
    for (Var p : inputs) tape.grad_mut(p)[0] += scale * self.grad[0];
  });
}

Var Tape::loss(Var logits_var, LossFunction fn) {
  check(logits_var);
  const Tensor& logits = value(logits_var);
  std::vector<double> local_grad(logits.size());
  const double total = fn(logits.data(), local_grad);
  return push(Tensor({1}, total), requires_grad(logits_var),
              [logits_var, local_grad = std::move(local_grad)](Tape& tape, const Node& self) {
                simd::axpy(self.grad[0], local_grad, tape.grad_mut(logits_var).data());
              });
}

void Tape::backward(Var root) {
  check(root);
  if (value(root).size() != 1) {
    throw InputError("backward: root must be a scalar, got " + shape_string(value(root).shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor(node.value().shape());
  nodes_[root.index].grad[0] = 1.0;
  backward_order_.clear();
  for (std::size_t i = root.index + 1; i-- > 0;) {
    backward_order_.push_back(i);
    const Node& node = nodes_[i];
    if (node.backward) node.backward(*this, node);
  }
  has_gradients_ = true;
}

// ---------------------------------------------------------------------------

double grad_check(const ScalarFunction& f, std::span<Tensor* const> params, double eps) {
  if (!(eps > 0.0)) throw InputError("grad_check: eps must be positive");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (Tensor* p : params) vars.push_back(tape.parameter(*p));
    const Var out = f(tape, vars);
    if (tape.value(out).size() != 1) throw InputError("grad_check: function output is not a scalar");
    tape.backward(out);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }

  const auto evaluate = [&] {
    Tape tape;
    std::vector<Var> vars;
    for (Tensor* p : params) vars.push_back(tape.parameter(*p));
    return tape.value(f(tape, vars))[0];
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double plus = evaluate();
      p[i] = saved - eps;
      const double minus = evaluate();
      p[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace doc
