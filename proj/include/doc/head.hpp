#pragma once

// Output heads. The one-vs-rest head scores each seen class with its own
// sigmoid, trains on the summed per-class log loss and can reject a
// document when every class probability falls below its threshold. The
// softmax head is the closed-world baseline: it always predicts a class.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "doc/tensor.hpp"

namespace doc {

enum class HeadKind { kOneVsRest, kSoftmax };

std::string_view head_name(HeadKind head) noexcept;
// "one_vs_rest" or "softmax"; InputError otherwise.
HeadKind parse_head(std::string_view name);

// Summed sigmoid log loss of one example over all m classes, computed from
// the logits with softplus. If grad is non-empty it receives
// sigmoid(d_i) - [i == label].
double one_vs_rest_loss(std::span<const double> logits, std::size_t label, std::span<double> grad = {});
// Total (unaveraged) loss of an n x m logit batch.
double one_vs_rest_loss(const Tensor& logits_batch, std::span<const std::size_t> labels);

// Softmax negative log-likelihood of one example; grad receives
// softmax(d) - onehot(label).
double softmax_loss(std::span<const double> logits, std::size_t label, std::span<double> grad = {});
double softmax_loss(const Tensor& logits_batch, std::span<const std::size_t> labels);

LossFunction head_loss(HeadKind head, std::size_t label);

std::vector<double> sigmoid_probabilities(std::span<const double> logits);
std::vector<double> softmax_probabilities(std::span<const double> logits);

// Lowest index among the maxima. InputError on an empty input.
std::size_t argmax(std::span<const double> values);

// Which classes compete for the label once a document is accepted.
enum class ArgmaxScope {
  kAllClasses,      // argmax over every class, even ones below their own threshold
  kAboveThreshold,  // argmax over classes that cleared their threshold
};

class OpenPrediction {
 public:
  static OpenPrediction reject() noexcept { return OpenPrediction(); }
  static OpenPrediction accept(std::size_t class_index, double probability) noexcept {
    OpenPrediction p;
    p.rejected_ = false;
    p.class_index_ = class_index;
    p.probability_ = probability;
    return p;
  }

  bool rejected() const noexcept { return rejected_; }
  // Only meaningful when !rejected().
  std::size_t class_index() const noexcept { return class_index_; }
  double probability() const noexcept { return probability_; }

  friend bool operator==(const OpenPrediction&, const OpenPrediction&) = default;

 private:
  OpenPrediction() = default;

  bool rejected_ = true;
  std::size_t class_index_ = 0;
  double probability_ = 0.0;
};

// Reject iff probs[i] < thresholds[i] for every class; otherwise the argmax
// over the given scope (ties to the lowest index).
OpenPrediction predict_open(std::span<const double> probs, std::span<const double> thresholds,
                            ArgmaxScope scope = ArgmaxScope::kAllClasses);

// Closed-world prediction: argmax of probabilities or logits.
std::size_t predict_closed(std::span<const double> scores);

}  // namespace doc
