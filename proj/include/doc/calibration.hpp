#pragma once

// Per-class rejection thresholds from training-set probabilities.
//
// For class i, the probabilities p_j the model assigns to class i on its own
// training documents are treated as the lower half of a Gaussian centred
// at 1. Each p_j is mirrored to 1 + (1 - p_j), sigma_i is the population
// standard deviation of the combined 2n points, and the threshold is
// t_i = max(0.5, 1 - alpha * sigma_i).

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "doc/data.hpp"
#include "doc/encoder.hpp"

namespace doc {

inline constexpr double kDefaultAlpha = 3.0;
inline constexpr double kBaseThreshold = 0.5;

struct ThresholdVector {
  std::vector<double> thresholds;
  // Fitted sigma per class; empty for a uniform override.
  std::vector<double> sigmas;
  // Set when the thresholds were fitted.
  std::optional<double> alpha;

  std::size_t size() const noexcept { return thresholds.size(); }

  // t_i = max(0.5, 1 - alpha * sigma_i)
  static ThresholdVector from_sigmas(std::vector<double> sigmas, double alpha);
  // Same threshold for every class, e.g. the plain 0.5 sigmoid cut-off.
  static ThresholdVector uniform(std::size_t classes, double threshold);

  friend bool operator==(const ThresholdVector&, const ThresholdVector&) = default;
};

// sqrt((1/n) * sum_j (1 - p_j)^2), which is the population standard
// deviation of the p_j together with their mirror points (their mean is 1).
// InputError on an empty list or any p outside (0, 1].
double fit_sigma(std::span<const double> class_probs);

// Probability of the gold class on every training document, grouped by
// class index. Labels must all be seen.
std::vector<std::vector<double>> collect_gold_probabilities(const EncoderConfig& config, const ModelParams& params,
                                                            std::span<const EncodedDocument> train_docs);

// CalibrationError naming the class if one has no training documents;
// InputError if alpha <= 0. `class_names` is only used for error messages
// and may be empty.
ThresholdVector fit_thresholds(const EncoderConfig& config, const ModelParams& params,
                               std::span<const EncodedDocument> train_docs, double alpha,
                               std::span<const std::string> class_names = {});

}  // namespace doc
