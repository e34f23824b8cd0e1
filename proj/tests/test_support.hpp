#pragma once

// Helpers shared by the unit and acceptance tests: random tensors, tiny
// encoder configs and a synthetic keyword corpus.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "doc/data.hpp"
#include "doc/encoder.hpp"
#include "doc/tensor.hpp"

namespace doc::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(shape);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

inline std::vector<TokenId> random_ids(std::size_t len, std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<TokenId> dist(0, static_cast<TokenId>(vocab) - 1);
  std::vector<TokenId> ids(len);
  for (auto& id : ids) id = dist(rng);
  return ids;
}

// Class c draws a share of its tokens from its own keyword list, a smaller
// share from the next class's keywords, and the rest from a shared pool of
// filler words with a skewed distribution.
struct SyntheticCorpusOptions {
  std::size_t classes = 8;
  std::size_t docs_per_class = 200;
  std::size_t keywords_per_class = 30;
  std::size_t common_words = 400;
  std::size_t min_len = 60;
  std::size_t max_len = 140;
  double keyword_share = 0.2;
  double neighbour_share = 0.05;
  std::uint64_t seed = 2024;
};

inline std::string class_name(std::size_t c) { return "topic" + std::string(1, static_cast<char>('a' + c % 26)) + std::to_string(c / 26); }

inline Dataset synthetic_corpus(const SyntheticCorpusOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length(o.min_len, o.max_len);
  std::uniform_int_distribution<std::size_t> keyword(0, o.keywords_per_class - 1);
  std::vector<double> weights(o.common_words);
  for (std::size_t i = 0; i < o.common_words; ++i) weights[i] = 1.0 / static_cast<double>(i + 1);
  std::discrete_distribution<std::size_t> common(weights.begin(), weights.end());

  Dataset out;
  for (std::size_t d = 0; d < o.docs_per_class; ++d) {
    for (std::size_t c = 0; c < o.classes; ++c) {
      std::string text;
      const std::size_t n = length(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double u = unit(rng);
        std::string word;
        if (u < o.keyword_share) {
          word = "kw" + std::to_string(c) + "x" + std::to_string(keyword(rng));
        } else if (u < o.keyword_share + o.neighbour_share) {
          word = "kw" + std::to_string((c + 1) % o.classes) + "x" + std::to_string(keyword(rng));
        } else {
          word = "w" + std::to_string(common(rng));
        }
        if (!text.empty()) text += ' ';
        text += word;
      }
      out.push_back({class_name(c), std::move(text)});
    }
  }
  return out;
}

inline void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream f(path);
  for (const auto& r : data) f << nlohmann::json{{"label", r.label}, {"text", r.text}}.dump() << '\n';
}

// Small encoder for fast tests.
inline EncoderConfig tiny_config(std::size_t vocab, std::size_t classes) {
  EncoderConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 4;
  c.filter_widths = {2, 3};
  c.filters_per_width = 3;
  c.hidden_dim = 5;
  c.num_classes = classes;
  c.doc_len = 8;
  return c;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("doc_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace doc::testing
