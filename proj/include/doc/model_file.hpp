#pragma once

// Versioned binary model container.
//
//   "DOCM" | u32 version | section*
//   section = 4-byte tag | u64 payload length | payload
//
// Sections, in this order: CONF (encoder config + head), CLAS (seen class
// names, index order), VOCB (vocabulary), SPLT (split recipe), PARM
// (parameter tensors), optionally THRS (fitted thresholds), then an empty
// END section so a file cut at a section boundary is still caught. Integers
// are little-endian u32/u64, floats little-endian IEEE-754 binary64,
// strings u32 length + bytes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "doc/calibration.hpp"
#include "doc/data.hpp"
#include "doc/encoder.hpp"
#include "doc/head.hpp"

namespace doc {

inline constexpr std::uint32_t kModelFormatVersion = 1;

// How the training split was drawn, so calibration can rebuild it.
struct SplitRecipe {
  double seen_fraction = 1.0;
  std::uint64_t seed = 0;

  friend bool operator==(const SplitRecipe&, const SplitRecipe&) = default;
};

struct ModelFile {
  EncoderConfig encoder;
  HeadKind head = HeadKind::kOneVsRest;
  std::vector<std::string> classes;
  Vocabulary vocab;
  SplitRecipe split;
  ModelParams params;
  std::optional<ThresholdVector> thresholds;

  friend bool operator==(const ModelFile&, const ModelFile&) = default;
};

std::string serialize_model(const ModelFile& model);
// Validates every section and shape; FormatError on any inconsistency,
// truncation, trailing bytes or an unknown version.
ModelFile deserialize_model(std::string_view bytes);

void save_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace doc
