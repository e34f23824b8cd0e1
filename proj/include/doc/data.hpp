#pragma once

// Text preprocessing and the open-world split protocol: tokenization,
// vocabulary construction, fixed-length encoding, and per-class stratified
// 60/10/30 splits with a random subset of classes held out as unseen.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "doc/tensor.hpp"

namespace doc {

struct LabeledText {
  std::string label;
  std::string text;
};

using Dataset = std::vector<LabeledText>;

// JSONL, one {"label": ..., "text": ...} object per line. Blank lines are
// skipped; anything else that is not exactly that shape is a FormatError
// naming the line.
Dataset read_dataset(std::istream& in);
Dataset read_dataset_file(const std::filesystem::path& path);

// Lowercases ASCII and splits on maximal runs of characters that are not
// ASCII letters or digits. Bytes >= 0x80 count as word characters so UTF-8
// words stay whole.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr std::size_t kReserved = 2;  // PAD and UNK

  Vocabulary();

  // Keeps the (max_size - 2) most frequent tokens; ties broken by ascending
  // token. Throws InputError when max_size < 3.
  static Vocabulary build(std::span<const std::vector<std::string>> docs, std::size_t max_size);
  // Rebuilds a vocabulary from its regular tokens in id order (ids 2, 3, ...).
  static Vocabulary from_tokens(std::vector<std::string> regular_tokens, std::size_t max_size);

  // UNK for unknown tokens.
  TokenId id(std::string_view token) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t max_size() const noexcept { return max_size_; }
  // Regular tokens, ids 2 onwards.
  std::span<const std::string> regular_tokens() const noexcept {
    return std::span<const std::string>(tokens_).subspan(kReserved);
  }
  // Training-split frequency of each kept token; empty after from_tokens().
  const std::unordered_map<std::string, std::size_t>& frequencies() const noexcept { return frequencies_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.max_size_ == b.max_size_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::unordered_map<std::string, std::size_t> frequencies_;
  std::size_t max_size_ = 0;
};

// Maps tokens to ids, then keeps the first doc_len ids or post-pads with PAD.
std::vector<TokenId> encode(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t doc_len);

struct EncodedDocument {
  std::vector<TokenId> ids;
  std::string label;
  // Index into the seen-class list; nullopt marks a document of an unseen
  // class (test split only).
  std::optional<std::size_t> seen_label;

  bool unseen() const noexcept { return !seen_label.has_value(); }
};

// Document indices into the source dataset for each part of one open-world
// split. seen_classes is sorted and defines the class indices.
struct OpenSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::vector<std::string> seen_classes;
  std::vector<std::string> unseen_classes;
  double seen_fraction = 1.0;
  std::uint64_t seed = 0;

  std::optional<std::size_t> class_index(std::string_view label) const;
};

// Chooses round(seen_fraction * classes) seen classes (InputError if fewer
// than 2) and splits each class 60/10/30: floor(n/10) validation,
// floor(3n/10) test, the rest train. Unseen classes keep only their test
// share. Fully determined by rep_seed.
OpenSplit make_open_split(const Dataset& dataset, double seen_fraction, std::uint64_t rep_seed);

// Audit manifest: indices per split plus the class lists, as JSON text.
std::string split_manifest_json(const OpenSplit& split);

std::vector<std::vector<std::string>> tokenize_all(const Dataset& dataset, std::span<const std::size_t> indices);

// Vocabulary from the split's training documents only.
Vocabulary build_split_vocab(const Dataset& dataset, const OpenSplit& split, std::size_t max_size);

std::vector<EncodedDocument> encode_documents(const Dataset& dataset, std::span<const std::size_t> indices,
                                              const OpenSplit& split, const Vocabulary& vocab,
                                              std::size_t doc_len);

}  // namespace doc
