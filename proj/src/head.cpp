#include "doc/head.hpp"

#include <cmath>
#include <string>

#include "doc/errors.hpp"
#include "doc/math.hpp"

namespace doc {
namespace {

void check_label(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw InputError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
  }
}

void check_batch(const Tensor& logits_batch, std::span<const std::size_t> labels) {
  if (logits_batch.rank() != 2 || logits_batch.dim(0) != labels.size()) {
    throw InputError("loss: logits batch must be n x m with one label per row");
  }
}

}  // namespace

std::string_view head_name(HeadKind head) noexcept {
  return head == HeadKind::kOneVsRest ? "one_vs_rest" : "softmax";
}

HeadKind parse_head(std::string_view name) {
  if (name == "one_vs_rest") return HeadKind::kOneVsRest;
  if (name == "softmax") return HeadKind::kSoftmax;
  throw InputError("unknown head '" + std::string(name) + "' (expected one_vs_rest or softmax)");
}

double one_vs_rest_loss(std::span<const double> logits, std::size_t label, std::span<double> grad) {
  check_label(label, logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    // -log(sigmoid(d)) = softplus(-d); -log(1 - sigmoid(d)) = softplus(d)
    total += i == label ? softplus(-logits[i]) : softplus(logits[i]);
    if (!grad.empty()) grad[i] = stable_sigmoid(logits[i]) - (i == label ? 1.0 : 0.0);
  }
  return total;
}

double one_vs_rest_loss(const Tensor& logits_batch, std::span<const std::size_t> labels) {
  check_batch(logits_batch, labels);
  double total = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) total += one_vs_rest_loss(logits_batch.slice(j), labels[j]);
  return total;
}

double softmax_loss(std::span<const double> logits, std::size_t label, std::span<double> grad) {
  check_label(label, logits.size());
  const double lse = log_sum_exp(logits);
  if (!grad.empty()) {
    for (std::size_t i = 0; i < logits.size(); ++i) {
      grad[i] = std::exp(logits[i] - lse) - (i == label ? 1.0 : 0.0);
    }
  }
  return lse - logits[label];
}

double softmax_loss(const Tensor& logits_batch, std::span<const std::size_t> labels) {
  check_batch(logits_batch, labels);
  double total = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) total += softmax_loss(logits_batch.slice(j), labels[j]);
  return total;
}

LossFunction head_loss(HeadKind head, std::size_t label) {
  if (head == HeadKind::kOneVsRest) {
    return [label](std::span<const double> logits, std::span<double> grad) {
      return one_vs_rest_loss(logits, label, grad);
    };
  }
  return [label](std::span<const double> logits, std::span<double> grad) {
    return softmax_loss(logits, label, grad);
  };
}

std::vector<double> sigmoid_probabilities(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = stable_sigmoid(logits[i]);
  return out;
}

std::vector<double> softmax_probabilities(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - lse);
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InputError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

OpenPrediction predict_open(std::span<const double> probs, std::span<const double> thresholds, ArgmaxScope scope) {
  if (probs.size() != thresholds.size()) {
    throw InputError("predict_open: " + std::to_string(probs.size()) + " probabilities but " +
                     std::to_string(thresholds.size()) + " thresholds");
  }
  if (probs.empty()) throw InputError("predict_open: no classes");
  bool any_clear = false;
  std::size_t best_clear = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] >= thresholds[i]) {
      if (!any_clear || probs[i] > probs[best_clear]) best_clear = i;
      any_clear = true;
    }
  }
  if (!any_clear) return OpenPrediction::reject();
  const std::size_t winner = scope == ArgmaxScope::kAllClasses ? argmax(probs) : best_clear;
  return OpenPrediction::accept(winner, probs[winner]);
}

std::size_t predict_closed(std::span<const double> scores) { return argmax(scores); }

}  // namespace doc
