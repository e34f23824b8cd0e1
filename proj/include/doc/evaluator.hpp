#pragma once

// Open-world scoring and the seen-fraction experiment protocol.
//
// Scores are macro-F1 over m + 1 labels: the m seen classes plus one
// rejection label that collects every unseen-class document as gold and
// every rejected prediction.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "doc/calibration.hpp"
#include "doc/data.hpp"
#include "doc/encoder.hpp"
#include "doc/head.hpp"
#include "doc/trainer.hpp"

namespace doc {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t seen_classes);

  std::size_t seen_classes() const noexcept { return seen_; }
  // Index of the rejection label (== seen_classes()).
  std::size_t reject_index() const noexcept { return seen_; }
  std::size_t labels() const noexcept { return seen_ + 1; }

  // Row = gold, column = predicted; index m is the rejection label.
  std::uint64_t count(std::size_t gold, std::size_t predicted) const;
  void add(std::size_t gold, std::size_t predicted, std::uint64_t n = 1);
  void add(std::optional<std::size_t> gold, const OpenPrediction& prediction);
  std::uint64_t total() const noexcept;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t seen_;
  std::vector<std::uint64_t> counts_;
};

// Unweighted mean of per-label F1 with 0/0 taken as 0. When the rejection
// label is neither gold nor predicted anywhere (closed-world setting) it is
// left out of the mean.
double macro_f1(const ConfusionMatrix& cm);

// Logits for every document, in order.
std::vector<Tensor> predict_logits(const EncoderConfig& enc, const ModelParams& params,
                                   std::span<const EncodedDocument> docs);

// Sigmoid probabilities of precomputed logits against the thresholds.
ConfusionMatrix score_open(std::span<const Tensor> logits, std::span<const EncodedDocument> docs,
                           const ThresholdVector& thresholds, ArgmaxScope scope = ArgmaxScope::kAllClasses);
// Argmax of the logits, never rejecting.
ConfusionMatrix score_closed(std::span<const Tensor> logits, std::span<const EncodedDocument> docs);

ConfusionMatrix evaluate(const EncoderConfig& enc, const ModelParams& params, const ThresholdVector& thresholds,
                         std::span<const EncodedDocument> test_docs, ArgmaxScope scope = ArgmaxScope::kAllClasses);
ConfusionMatrix evaluate_closed(const EncoderConfig& enc, const ModelParams& params,
                                std::span<const EncodedDocument> test_docs);

struct ExperimentSpec {
  std::vector<double> seen_fractions{0.25, 0.5, 0.75, 1.0};
  std::size_t repetitions = 10;
  std::uint64_t base_seed = 0;
  // vocab_size is the vocabulary cap; num_classes is set per split.
  EncoderConfig encoder;
  TrainConfig training;
  double alpha = kDefaultAlpha;
  // Also train the softmax baseline head.
  bool include_softmax = true;

  void validate() const;
};

inline constexpr const char* kMethodDoc = "DOC";
inline constexpr const char* kMethodDocHalf = "DOC(t=0.5)";
inline constexpr const char* kMethodSoftmax = "Softmax";

struct MethodCell {
  std::string method;
  std::vector<double> scores;  // macro-F1 per repetition
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct FractionResult {
  double seen_fraction = 0.0;
  std::vector<MethodCell> methods;

  const MethodCell& method(std::string_view name) const;
};

struct ExperimentResult {
  std::vector<FractionResult> fractions;

  std::string to_json() const;
  // Rows = methods, columns = seen fractions, cells "mean +- std".
  std::string to_text() const;
};

// Seed for one (fraction, repetition) cell; shared by every method in it.
std::uint64_t repetition_seed(std::uint64_t base_seed, std::size_t fraction_index, std::size_t repetition);

using ProgressFn = std::function<void(const std::string&)>;

// For every (fraction, repetition): split, train, calibrate, evaluate DOC,
// DOC(t=0.5) and, if enabled, the softmax baseline. Errors are rethrown
// tagged with the failing cell.
ExperimentResult run_experiment(const ExperimentSpec& spec, const Dataset& dataset, const ProgressFn& progress = {});

}  // namespace doc
