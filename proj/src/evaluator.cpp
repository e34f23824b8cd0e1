#include "doc/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "doc/errors.hpp"

namespace doc {
namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fraction_label(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%%", f * 100.0);
  return buf;
}

template <class Fn>
auto with_context(const std::string& context, Fn&& fn) {
  try {
    return fn();
  } catch (const TrainingDivergedError& e) {
    throw TrainingDivergedError(e.epoch(), e.batch(), context);
  } catch (const InputError& e) {
    throw InputError(context + e.what());
  } catch (const FormatError& e) {
    throw FormatError(context + e.what());
  } catch (const CalibrationError& e) {
    throw CalibrationError(context + e.what());
  } catch (const ConfigurationError& e) {
    throw ConfigurationError(context + e.what());
  }
}

MethodCell summarize(std::string name, std::vector<double> scores) {
  MethodCell cell{std::move(name), std::move(scores)};
  const double n = static_cast<double>(cell.scores.size());
  double sum = 0.0;
  for (double s : cell.scores) sum += s;
  cell.mean = sum / n;
  double var = 0.0;
  for (double s : cell.scores) var += (s - cell.mean) * (s - cell.mean);
  cell.stddev = std::sqrt(var / n);
  return cell;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConfusionMatrix

ConfusionMatrix::ConfusionMatrix(std::size_t seen_classes)
    : seen_(seen_classes), counts_((seen_classes + 1) * (seen_classes + 1), 0) {}

std::uint64_t ConfusionMatrix::count(std::size_t gold, std::size_t predicted) const {
  if (gold >= labels() || predicted >= labels()) throw InputError("confusion matrix index out of range");
  return counts_[gold * labels() + predicted];
}

void ConfusionMatrix::add(std::size_t gold, std::size_t predicted, std::uint64_t n) {
  if (gold >= labels() || predicted >= labels()) throw InputError("confusion matrix index out of range");
  counts_[gold * labels() + predicted] += n;
}

void ConfusionMatrix::add(std::optional<std::size_t> gold, const OpenPrediction& prediction) {
  add(gold.value_or(reject_index()), prediction.rejected() ? reject_index() : prediction.class_index());
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

double macro_f1(const ConfusionMatrix& cm) {
  const std::size_t n = cm.labels();
  std::vector<double> row(n, 0.0), col(n, 0.0);
  for (std::size_t g = 0; g < n; ++g) {
    for (std::size_t p = 0; p < n; ++p) {
      const auto c = static_cast<double>(cm.count(g, p));
      row[g] += c;
      col[p] += c;
    }
  }
  const std::size_t r = cm.reject_index();
  const bool closed_world = row[r] == 0.0 && col[r] == 0.0;
  const std::size_t scored = closed_world ? cm.seen_classes() : n;
  double sum = 0.0;
  for (std::size_t c = 0; c < scored; ++c) {
    const auto tp = static_cast<double>(cm.count(c, c));
    const double precision = safe_ratio(tp, col[c]);
    const double recall = safe_ratio(tp, row[c]);
    sum += safe_ratio(2.0 * precision * recall, precision + recall);
  }
  return sum / static_cast<double>(scored);
}

std::vector<Tensor> predict_logits(const EncoderConfig& enc, const ModelParams& params,
                                   std::span<const EncodedDocument> docs) {
  std::vector<Tensor> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(forward(enc, params, d.ids));
  return out;
}

ConfusionMatrix score_open(std::span<const Tensor> logits, std::span<const EncodedDocument> docs,
                           const ThresholdVector& thresholds, ArgmaxScope scope) {
  if (logits.size() != docs.size()) throw InputError("score_open: logits and documents differ in count");
  ConfusionMatrix cm(thresholds.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto probs = sigmoid_probabilities(logits[i].data());
    cm.add(docs[i].seen_label, predict_open(probs, thresholds.thresholds, scope));
  }
  return cm;
}

ConfusionMatrix score_closed(std::span<const Tensor> logits, std::span<const EncodedDocument> docs) {
  if (logits.size() != docs.size()) throw InputError("score_closed: logits and documents differ in count");
  if (logits.empty()) throw InputError("score_closed: no documents");
  ConfusionMatrix cm(logits.front().size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const std::size_t pred = predict_closed(logits[i].data());
    cm.add(docs[i].seen_label, OpenPrediction::accept(pred, 0.0));
  }
  return cm;
}

ConfusionMatrix evaluate(const EncoderConfig& enc, const ModelParams& params, const ThresholdVector& thresholds,
                         std::span<const EncodedDocument> test_docs, ArgmaxScope scope) {
  if (thresholds.size() != enc.num_classes) throw InputError("evaluate: thresholds do not match the class count");
  ConfusionMatrix cm(enc.num_classes);
  for (const auto& d : test_docs) {
    const Tensor logits = forward(enc, params, d.ids);
    cm.add(d.seen_label, predict_open(sigmoid_probabilities(logits.data()), thresholds.thresholds, scope));
  }
  return cm;
}

ConfusionMatrix evaluate_closed(const EncoderConfig& enc, const ModelParams& params,
                                std::span<const EncodedDocument> test_docs) {
  ConfusionMatrix cm(enc.num_classes);
  for (const auto& d : test_docs) {
    const Tensor logits = forward(enc, params, d.ids);
    cm.add(d.seen_label, OpenPrediction::accept(predict_closed(logits.data()), 0.0));
  }
  return cm;
}

// ---------------------------------------------------------------------------
// Experiment protocol

void ExperimentSpec::validate() const {
  if (repetitions < 1) throw InputError("experiment: repetitions must be at least 1");
  if (seen_fractions.empty()) throw InputError("experiment: no seen fractions");
  for (double f : seen_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw InputError("experiment: seen fraction outside (0, 1]");
  }
  if (!(alpha > 0.0)) throw InputError("experiment: alpha must be positive");
  training.validate();
}

const MethodCell& FractionResult::method(std::string_view name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  throw InputError("no method '" + std::string(name) + "' in result");
}

std::uint64_t repetition_seed(std::uint64_t base_seed, std::size_t fraction_index, std::size_t repetition) {
  return mix(mix(base_seed ^ mix(fraction_index + 1)) ^ (repetition + 1));
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const Dataset& dataset, const ProgressFn& progress) {
  spec.validate();
  ExperimentResult result;
  for (std::size_t fi = 0; fi < spec.seen_fractions.size(); ++fi) {
    const double fraction = spec.seen_fractions[fi];
    std::vector<double> doc_scores, half_scores, softmax_scores;
    for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
      const std::uint64_t seed = repetition_seed(spec.base_seed, fi, rep);
      const std::string context = "[fraction " + fixed4(fraction) + ", repetition " + std::to_string(rep) + "] ";
      with_context(context, [&] {
        const OpenSplit split = make_open_split(dataset, fraction, seed);
        const Vocabulary vocab = build_split_vocab(dataset, split, spec.encoder.vocab_size);
        EncoderConfig enc = spec.encoder;
        enc.vocab_size = vocab.size();
        enc.num_classes = split.seen_classes.size();
        auto train_docs = encode_documents(dataset, split.train, split, vocab, enc.doc_len);
        auto val_docs = encode_documents(dataset, split.validation, split, vocab, enc.doc_len);
        const auto test_docs = encode_documents(dataset, split.test, split, vocab, enc.doc_len);
        const TrainingData data(std::move(train_docs), std::move(val_docs), enc.num_classes);

        TrainConfig cfg = spec.training;
        cfg.seed = seed;
        cfg.head = HeadKind::kOneVsRest;
        const TrainResult doc_model = train(data, enc, cfg);
        const ThresholdVector fitted =
            fit_thresholds(enc, doc_model.params, data.train(), spec.alpha, split.seen_classes);
        const auto logits = predict_logits(enc, doc_model.params, test_docs);
        doc_scores.push_back(macro_f1(score_open(logits, test_docs, fitted)));
        half_scores.push_back(
            macro_f1(score_open(logits, test_docs, ThresholdVector::uniform(enc.num_classes, kBaseThreshold))));

        if (spec.include_softmax) {
          cfg.head = HeadKind::kSoftmax;
          const TrainResult softmax_model = train(data, enc, cfg);
          softmax_scores.push_back(macro_f1(evaluate_closed(enc, softmax_model.params, test_docs)));
        }
        if (progress) {
          std::ostringstream msg;
          msg << context << "DOC " << fixed4(doc_scores.back()) << ", DOC(t=0.5) " << fixed4(half_scores.back());
          if (spec.include_softmax) msg << ", Softmax " << fixed4(softmax_scores.back());
          progress(msg.str());
        }
        return 0;
      });
    }
    FractionResult row{fraction, {}};
    row.methods.push_back(summarize(kMethodDoc, std::move(doc_scores)));
    row.methods.push_back(summarize(kMethodDocHalf, std::move(half_scores)));
    if (spec.include_softmax) row.methods.push_back(summarize(kMethodSoftmax, std::move(softmax_scores)));
    result.fractions.push_back(std::move(row));
  }
  return result;
}

std::string ExperimentResult::to_json() const {
  nlohmann::json j;
  j["metric"] = "macro_f1";
  j["fractions"] = nlohmann::json::array();
  for (const auto& row : fractions) {
    nlohmann::json r;
    r["seen_fraction"] = row.seen_fraction;
    for (const auto& m : row.methods) {
      r["methods"][m.method] = {{"mean", m.mean}, {"std", m.stddev}, {"scores", m.scores}};
    }
    j["fractions"].push_back(std::move(r));
  }
  return j.dump(2);
}

std::string ExperimentResult::to_text() const {
  std::vector<std::string> methods;
  for (const auto& row : fractions) {
    for (const auto& m : row.methods) {
      if (std::find(methods.begin(), methods.end(), m.method) == methods.end()) methods.push_back(m.method);
    }
  }
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"Method"};
  for (const auto& row : fractions) header.push_back(fraction_label(row.seen_fraction));
  table.push_back(header);
  for (const auto& name : methods) {
    std::vector<std::string> line{name};
    for (const auto& row : fractions) {
      const auto it = std::find_if(row.methods.begin(), row.methods.end(),
                                   [&](const MethodCell& m) { return m.method == name; });
      line.push_back(it == row.methods.end() ? "-" : fixed4(it->mean) + " +- " + fixed4(it->stddev));
    }
    table.push_back(std::move(line));
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
  }
  std::ostringstream out;
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out << line[c];
      if (c + 1 < line.size()) out << std::string(widths[c] - line[c].size() + 2, ' ');
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace doc
