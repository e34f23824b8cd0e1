#include "doc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <random>

#include <json.hpp>

#include "doc/errors.hpp"

namespace doc {
namespace {

bool is_word_byte(unsigned char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

// Separate streams so the class choice and the per-class document shuffle
// do not depend on each other: the same rep_seed puts the same documents in
// each class's test share whatever the seen fraction.
constexpr std::uint64_t kClassStream = 0x636c617373657321ULL;
constexpr std::uint64_t kDocStream = 0x646f63756d656e74ULL;

}  // namespace

Dataset read_dataset(std::istream& in) {
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    if (!record.is_object() || record.size() != 2 || !record.contains("label") || !record.contains("text") ||
        !record["label"].is_string() || !record["text"].is_string()) {
      throw FormatError("dataset line " + std::to_string(line_no) +
                        ": expected an object with exactly string keys \"label\" and \"text\"");
    }
    out.push_back({record["label"].get<std::string>(), record["text"].get<std::string>()});
  }
  return out;
}

Dataset read_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset file " + path.string());
  return read_dataset(in);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : tokens_{"<pad>", "<unk>"}, max_size_(kReserved) {}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> docs, std::size_t max_size) {
  if (max_size < kReserved + 1) throw InputError("vocabulary max_size must be at least 3");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : docs) {
    for (const auto& tok : doc) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_size - kReserved) ranked.resize(max_size - kReserved);

  std::vector<std::string> kept;
  kept.reserve(ranked.size());
  for (const auto& [tok, count] : ranked) kept.push_back(tok);
  Vocabulary vocab = from_tokens(std::move(kept), max_size);
  for (const auto& [tok, count] : ranked) vocab.frequencies_.emplace(tok, count);
  return vocab;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> regular_tokens, std::size_t max_size) {
  if (max_size < kReserved + 1) throw InputError("vocabulary max_size must be at least 3");
  if (regular_tokens.size() + kReserved > max_size) {
    throw InputError("vocabulary holds more tokens than its max_size");
  }
  Vocabulary vocab;
  vocab.max_size_ = max_size;
  for (auto& tok : regular_tokens) {
    if (tok.empty()) throw InputError("vocabulary token must not be empty");
    const auto id = static_cast<TokenId>(vocab.tokens_.size());
    if (!vocab.index_.emplace(tok, id).second) throw InputError("duplicate vocabulary token '" + tok + "'");
    vocab.tokens_.push_back(std::move(tok));
  }
  return vocab;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnkId); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InputError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> encode(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t doc_len) {
  std::vector<TokenId> ids(doc_len, kPadId);
  const std::size_t kept = std::min(doc_len, tokens.size());
  for (std::size_t i = 0; i < kept; ++i) ids[i] = vocab.id(tokens[i]);
  return ids;
}

// ---------------------------------------------------------------------------
// Splits

std::optional<std::size_t> OpenSplit::class_index(std::string_view label) const {
  const auto it = std::lower_bound(seen_classes.begin(), seen_classes.end(), label);
  if (it == seen_classes.end() || *it != label) return std::nullopt;
  return static_cast<std::size_t>(it - seen_classes.begin());
}

OpenSplit make_open_split(const Dataset& dataset, double seen_fraction, std::uint64_t rep_seed) {
  if (!(seen_fraction > 0.0 && seen_fraction <= 1.0)) {
    throw InputError("seen fraction must lie in (0, 1], got " + std::to_string(seen_fraction));
  }
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset[i].label].push_back(i);
  if (by_class.size() < 2) throw InputError("dataset must contain at least 2 classes");

  const auto seen_count =
      static_cast<std::size_t>(std::llround(seen_fraction * static_cast<double>(by_class.size())));
  if (seen_count < 2) {
    throw InputError("seen fraction " + std::to_string(seen_fraction) + " of " +
                     std::to_string(by_class.size()) + " classes leaves fewer than 2 seen classes");
  }

  std::vector<std::string> classes;
  for (const auto& [name, docs] : by_class) classes.push_back(name);
  std::mt19937_64 class_rng(rep_seed ^ kClassStream);
  std::vector<std::string> order = classes;
  std::shuffle(order.begin(), order.end(), class_rng);

  OpenSplit split;
  split.seen_fraction = seen_fraction;
  split.seed = rep_seed;
  split.seen_classes.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(seen_count));
  split.unseen_classes.assign(order.begin() + static_cast<std::ptrdiff_t>(seen_count), order.end());
  std::sort(split.seen_classes.begin(), split.seen_classes.end());
  std::sort(split.unseen_classes.begin(), split.unseen_classes.end());

  std::mt19937_64 doc_rng(rep_seed ^ kDocStream);
  for (const auto& name : classes) {
    std::vector<std::size_t> docs = by_class[name];
    std::shuffle(docs.begin(), docs.end(), doc_rng);
    const std::size_t n = docs.size();
    const std::size_t n_val = n / 10;
    const std::size_t n_test = 3 * n / 10;
    const bool seen = split.class_index(name).has_value();
    for (std::size_t k = 0; k < n; ++k) {
      if (k < n_test) {
        split.test.push_back(docs[k]);
      } else if (!seen) {
        continue;
      } else if (k < n_test + n_val) {
        split.validation.push_back(docs[k]);
      } else {
        split.train.push_back(docs[k]);
      }
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::string split_manifest_json(const OpenSplit& split) {
  nlohmann::json j;
  j["seen_fraction"] = split.seen_fraction;
  j["seed"] = split.seed;
  j["seen_classes"] = split.seen_classes;
  j["unseen_classes"] = split.unseen_classes;
  j["train"] = split.train;
  j["validation"] = split.validation;
  j["test"] = split.test;
  return j.dump(2);
}

std::vector<std::vector<std::string>> tokenize_all(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<std::vector<std::string>> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(tokenize(dataset.at(i).text));
  return out;
}

Vocabulary build_split_vocab(const Dataset& dataset, const OpenSplit& split, std::size_t max_size) {
  const auto docs = tokenize_all(dataset, split.train);
  return Vocabulary::build(docs, max_size);
}

std::vector<EncodedDocument> encode_documents(const Dataset& dataset, std::span<const std::size_t> indices,
                                              const OpenSplit& split, const Vocabulary& vocab,
                                              std::size_t doc_len) {
  std::vector<EncodedDocument> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const LabeledText& record = dataset.at(i);
    const auto tokens = tokenize(record.text);
    out.push_back({encode(tokens, vocab, doc_len), record.label, split.class_index(record.label)});
  }
  return out;
}

}  // namespace doc
