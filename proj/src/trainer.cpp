#include "doc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "doc/errors.hpp"

namespace doc {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(epoch)));
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw InputError("train config: batch size must be at least 1");
  if (patience < 1) throw InputError("train config: patience must be at least 1");
  if (max_epochs < 1) throw InputError("train config: max epochs must be at least 1");
  if (!(learning_rate >= 0.0)) throw InputError("train config: learning rate must be non-negative");
}

std::string TrainReport::to_json() const {
  nlohmann::json j;
  j["train_loss"] = train_loss;
  j["validation_loss"] = validation_loss;
  j["best_epoch"] = best_epoch;
  j["stopped_early"] = stopped_early;
  j["monitored_training_loss"] = monitored_training_loss;
  return j.dump(2);
}

TrainingData::TrainingData(std::vector<EncodedDocument> train, std::vector<EncodedDocument> validation,
                           std::size_t num_classes)
    : train_(std::move(train)), validation_(std::move(validation)), num_classes_(num_classes) {
  const auto check = [&](const std::vector<EncodedDocument>& docs, const char* part) {
    for (const auto& d : docs) {
      if (d.unseen() || *d.seen_label >= num_classes_) {
        throw InputError(std::string(part) + " split contains a document without a seen label ('" + d.label + "')");
      }
    }
  };
  check(train_, "training");
  check(validation_, "validation");
}

AdamState::AdamState(const ModelParams& params) {
  for (const Tensor* t : params.tensors()) {
    first_.emplace_back(t->shape());
    second_.emplace_back(t->shape());
  }
}

void AdamState::apply(ModelParams& params, std::span<const Tensor* const> grads, const TrainConfig& config) {
  auto tensors = params.tensors();
  if (grads.size() != tensors.size()) throw InputError("adam: gradient count does not match parameters");
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    if (k == 0 && config.freeze_embeddings) continue;
    Tensor& p = *tensors[k];
    const Tensor& g = *grads[k];
    Tensor& m = first_[k];
    Tensor& v = second_[k];
    // Embedding row 0 is PAD and stays zero.
    const std::size_t begin = k == 0 ? p.dim(1) : 0;
    for (std::size_t i = begin; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

double training_step(const EncoderConfig& enc, ModelParams& params, std::span<const EncodedDocument* const> batch,
                     AdamState& state, const TrainConfig& config) {
  if (batch.empty()) throw InputError("training step: empty batch");
  for (const EncodedDocument* d : batch) {
    if (d->unseen()) throw InputError("training step: document of unseen class '" + d->label + "' in batch");
    if (*d->seen_label >= enc.num_classes) throw InputError("training step: label outside the model's classes");
  }
  Tape tape;
  const ParamVars vars = bind_params(tape, params);
  std::vector<Var> losses;
  losses.reserve(batch.size());
  for (const EncodedDocument* d : batch) {
    const Var logits = forward(tape, enc, vars, d->ids);
    losses.push_back(tape.loss(logits, head_loss(config.head, *d->seen_label)));
  }
  const Var total = tape.sum_scalars(losses, 1.0 / static_cast<double>(batch.size()));
  const double loss = tape.value(total)[0];
  if (!std::isfinite(loss)) return loss;
  tape.backward(total);
  std::vector<const Tensor*> grads;
  for (Var v : vars.all()) grads.push_back(&tape.grad(v));
  state.apply(params, grads, config);
  return loss;
}

double mean_loss(const EncoderConfig& enc, const ModelParams& params, std::span<const EncodedDocument> docs,
                 HeadKind head) {
  if (docs.empty()) return 0.0;
  double total = 0.0;
  for (const EncodedDocument& d : docs) {
    if (d.unseen()) throw InputError("loss: document of unseen class '" + d.label + "'");
    const Tensor logits = forward(enc, params, d.ids);
    total += head == HeadKind::kOneVsRest ? one_vs_rest_loss(logits.data(), *d.seen_label)
                                          : softmax_loss(logits.data(), *d.seen_label);
  }
  return total / static_cast<double>(docs.size());
}

TrainResult train(const TrainingData& data, const EncoderConfig& enc, const TrainConfig& config,
                  const ModelParams* initial) {
  enc.validate();
  config.validate();
  if (data.train().empty()) throw InputError("training split is empty");
  if (data.num_classes() != enc.num_classes) throw InputError("training data and encoder disagree on class count");
  std::vector<bool> present(enc.num_classes, false);
  for (const auto& d : data.train()) present[*d.seen_label] = true;
  for (std::size_t i = 0; i < present.size(); ++i) {
    if (!present[i]) throw InputError("seen class " + std::to_string(i) + " has no training documents");
  }

  ModelParams params = initial ? *initial : init_params(enc, config.seed);
  params.validate(enc);
  AdamState state(params);
  TrainResult result{params, {}};
  TrainReport& report = result.report;
  report.monitored_training_loss = data.validation().empty();

  const auto& docs = data.train();
  std::vector<std::size_t> order(docs.size());
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(epoch_seed(config.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_total = 0.0;
    std::size_t batch_index = 0;
    std::vector<const EncodedDocument*> batch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&docs[order[i]]);
      const double loss = training_step(enc, params, batch, state, config);
      if (!std::isfinite(loss)) throw TrainingDivergedError(epoch + 1, batch_index);
      epoch_total += loss * static_cast<double>(batch.size());
    }
    report.train_loss.push_back(epoch_total / static_cast<double>(docs.size()));

    const double monitored = report.monitored_training_loss ? mean_loss(enc, params, docs, config.head)
                                                            : mean_loss(enc, params, data.validation(), config.head);
    if (!std::isfinite(monitored)) throw TrainingDivergedError(epoch + 1, batch_index);
    report.validation_loss.push_back(monitored);

    if (monitored < best) {
      best = monitored;
      since_best = 0;
      report.best_epoch = static_cast<std::size_t>(epoch);
      result.params = params;
    } else if (++since_best >= config.patience) {
      report.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace doc
