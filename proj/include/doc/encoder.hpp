#pragma once

// Convolutional text encoder producing the m-dimensional logit vector:
// embedding -> one valid convolution per filter width -> ReLU ->
// max-over-time -> concatenation (ascending width) -> dense -> ReLU -> dense.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "doc/data.hpp"
#include "doc/tensor.hpp"

namespace doc {

struct EncoderConfig {
  std::size_t vocab_size = 5000;
  std::size_t embed_dim = 50;
  std::vector<std::size_t> filter_widths{3, 4, 5};
  std::size_t filters_per_width = 150;
  std::size_t hidden_dim = 250;
  std::size_t num_classes = 2;
  std::size_t doc_len = 200;
  // Apply ReLU to convolution outputs before pooling. Off pools raw
  // convolution outputs (ablation).
  bool conv_relu = true;

  // Width of the pooled feature vector h.
  std::size_t pooled_dim() const noexcept { return filters_per_width * filter_widths.size(); }
  // Throws InputError on inconsistent dimensions.
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct ModelParams {
  Tensor embedding;                  // V x e
  std::vector<Tensor> conv_filters;  // per width: F x w x e, ascending width
  std::vector<Tensor> conv_biases;   // per width: F
  Tensor hidden_weight;              // r x k
  Tensor hidden_bias;                // r
  Tensor output_weight;              // m x r
  Tensor output_bias;                // m

  // Fixed order: embedding, (filters, bias) per width, hidden W, b, output W, b.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  // Throws FormatError if any shape disagrees with the config.
  void validate(const EncoderConfig& config) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Deterministic in seed. Weights uniform in +-sqrt(6 / (fan_in + fan_out)),
// biases zero, embedding rows uniform in [-0.25, 0.25], PAD row zero.
ModelParams init_params(const EncoderConfig& config, std::uint64_t seed);

// ModelParams registered on a tape, same order as ModelParams::tensors().
struct ParamVars {
  Var embedding;
  std::vector<Var> conv_filters;
  std::vector<Var> conv_biases;
  Var hidden_weight;
  Var hidden_bias;
  Var output_weight;
  Var output_bias;

  std::vector<Var> all() const;
};

ParamVars bind_params(Tape& tape, const ModelParams& params);
// Inverse of ParamVars::all() for a list produced in tensors() order.
ParamVars param_vars_from(std::span<const Var> vars, std::size_t num_widths);

// Records the forward pass on the tape and returns the logit node.
Var forward(Tape& tape, const EncoderConfig& config, const ParamVars& vars, std::span<const TokenId> doc);
// Logits d for one document of exactly config.doc_len ids.
Tensor forward(const EncoderConfig& config, const ModelParams& params, std::span<const TokenId> doc);

// Reads "token v1 ... ve" lines and overwrites the embedding rows of tokens
// present in vocab. A leading "<count> <dim>" header line is accepted.
// Returns the number of rows replaced.
std::size_t load_pretrained_embeddings(ModelParams& params, std::istream& source, const Vocabulary& vocab);

}  // namespace doc
