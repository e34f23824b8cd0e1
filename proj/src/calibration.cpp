#include "doc/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "doc/errors.hpp"
#include "doc/math.hpp"

namespace doc {

ThresholdVector ThresholdVector::from_sigmas(std::vector<double> sigmas, double alpha) {
  ThresholdVector tv;
  tv.thresholds.reserve(sigmas.size());
  for (double s : sigmas) tv.thresholds.push_back(std::max(kBaseThreshold, 1.0 - alpha * s));
  tv.sigmas = std::move(sigmas);
  tv.alpha = alpha;
  return tv;
}

ThresholdVector ThresholdVector::uniform(std::size_t classes, double threshold) {
  ThresholdVector tv;
  tv.thresholds.assign(classes, threshold);
  return tv;
}

double fit_sigma(std::span<const double> class_probs) {
  if (class_probs.empty()) throw InputError("fit_sigma: no probabilities");
  double sum_sq = 0.0;
  for (double p : class_probs) {
    if (!(p > 0.0 && p <= 1.0)) throw InputError("fit_sigma: probability " + std::to_string(p) + " outside (0, 1]");
    const double gap = 1.0 - p;
    sum_sq += gap * gap;
  }
  return std::sqrt(sum_sq / static_cast<double>(class_probs.size()));
}

std::vector<std::vector<double>> collect_gold_probabilities(const EncoderConfig& config, const ModelParams& params,
                                                            std::span<const EncodedDocument> train_docs) {
  std::vector<std::vector<double>> per_class(config.num_classes);
  for (const EncodedDocument& doc : train_docs) {
    if (doc.unseen()) throw InputError("calibration: document of unseen class '" + doc.label + "'");
    const std::size_t label = *doc.seen_label;
    if (label >= config.num_classes) throw InputError("calibration: label outside the model's classes");
    const Tensor logits = forward(config, params, doc.ids);
    per_class[label].push_back(stable_sigmoid(logits[label]));
  }
  return per_class;
}

ThresholdVector fit_thresholds(const EncoderConfig& config, const ModelParams& params,
                               std::span<const EncodedDocument> train_docs, double alpha,
                               std::span<const std::string> class_names) {
  if (!(alpha > 0.0)) throw InputError("calibration: alpha must be positive");
  const auto per_class = collect_gold_probabilities(config, params, train_docs);
  std::vector<double> sigmas;
  sigmas.reserve(per_class.size());
  for (std::size_t i = 0; i < per_class.size(); ++i) {
    if (per_class[i].empty()) {
      const std::string name = i < class_names.size() ? class_names[i] : std::to_string(i);
      throw CalibrationError("calibration: class '" + name + "' has no training documents");
    }
    sigmas.push_back(fit_sigma(per_class[i]));
  }
  return ThresholdVector::from_sigmas(std::move(sigmas), alpha);
}

}  // namespace doc
