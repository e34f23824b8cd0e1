#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "doc/data.hpp"
#include "doc/encoder.hpp"
#include "doc/head.hpp"

namespace doc {

struct TrainConfig {
  std::size_t batch_size = 64;
  int max_epochs = 20;
  double learning_rate = 1e-3;
  int patience = 3;
  std::uint64_t seed = 0;
  HeadKind head = HeadKind::kOneVsRest;
  // Adam constants.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool freeze_embeddings = false;

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;       // mean per-document loss, one entry per epoch
  std::vector<double> validation_loss;  // same, on the validation split
  std::size_t best_epoch = 0;           // 0-based index of the restored epoch
  bool stopped_early = false;
  // True when the validation split was empty and the training-set loss was
  // monitored instead.
  bool monitored_training_loss = false;

  std::string to_json() const;
};

// Training and validation documents only; test documents cannot be passed
// to the trainer. Every document must carry a seen label below num_classes.
class TrainingData {
 public:
  TrainingData(std::vector<EncodedDocument> train, std::vector<EncodedDocument> validation, std::size_t num_classes);

  const std::vector<EncodedDocument>& train() const noexcept { return train_; }
  const std::vector<EncodedDocument>& validation() const noexcept { return validation_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

 private:
  std::vector<EncodedDocument> train_;
  std::vector<EncodedDocument> validation_;
  std::size_t num_classes_;
};

// First and second moment estimates for every parameter tensor.
class AdamState {
 public:
  explicit AdamState(const ModelParams& params);

  // One update of every tensor from grads (ModelParams::tensors() order).
  // The PAD row never moves; the embedding is skipped entirely when frozen.
  void apply(ModelParams& params, std::span<const Tensor* const> grads, const TrainConfig& config);
  std::size_t steps() const noexcept { return steps_; }

 private:
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::size_t steps_ = 0;
};

// One forward/backward/update cycle. Returns the pre-update batch loss
// divided by the batch size. A non-finite loss is returned without
// touching the parameters. InputError on an empty batch or unseen label.
double training_step(const EncoderConfig& enc, ModelParams& params, std::span<const EncodedDocument* const> batch,
                     AdamState& state, const TrainConfig& config);

// Mean per-document loss in inference mode.
double mean_loss(const EncoderConfig& enc, const ModelParams& params, std::span<const EncodedDocument> docs,
                 HeadKind head);

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

// Mini-batch Adam with early stopping on validation loss; returns the
// parameters of the best epoch. Deterministic in config.seed. Starts from
// init_params(enc, config.seed) unless `initial` is given.
// TrainingDivergedError on a non-finite batch loss.
TrainResult train(const TrainingData& data, const EncoderConfig& enc, const TrainConfig& config,
                  const ModelParams* initial = nullptr);

}  // namespace doc
