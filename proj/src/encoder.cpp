#include "doc/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>

#include "doc/errors.hpp"

namespace doc {
namespace {

void fill_uniform(Tensor& t, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& x : t.data()) x = dist(rng);
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void expect_shape(const Tensor& t, const Shape& shape, const char* what) {
  if (t.shape() != shape) throw FormatError(std::string("parameter ") + what + " has the wrong shape");
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < 1 || embed_dim < 1 || filters_per_width < 1 || hidden_dim < 1 || doc_len < 1) {
    throw InputError("encoder config: all dimensions must be at least 1");
  }
  if (num_classes < 2) throw InputError("encoder config: at least 2 classes are required");
  if (filter_widths.empty()) throw InputError("encoder config: no filter widths");
  if (!std::is_sorted(filter_widths.begin(), filter_widths.end()) ||
      std::adjacent_find(filter_widths.begin(), filter_widths.end()) != filter_widths.end()) {
    throw InputError("encoder config: filter widths must be strictly ascending");
  }
  if (filter_widths.front() < 1) throw InputError("encoder config: filter width must be at least 1");
  if (doc_len < filter_widths.back()) {
    throw InputError("encoder config: document length " + std::to_string(doc_len) +
                     " is shorter than the widest filter");
  }
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out{&embedding};
  for (std::size_t i = 0; i < conv_filters.size(); ++i) {
    out.push_back(&conv_filters[i]);
    out.push_back(&conv_biases[i]);
  }
  out.insert(out.end(), {&hidden_weight, &hidden_bias, &output_weight, &output_bias});
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

void ModelParams::validate(const EncoderConfig& config) const {
  expect_shape(embedding, {config.vocab_size, config.embed_dim}, "embedding");
  if (conv_filters.size() != config.filter_widths.size() || conv_biases.size() != config.filter_widths.size()) {
    throw FormatError("parameter set has the wrong number of convolution widths");
  }
  for (std::size_t i = 0; i < conv_filters.size(); ++i) {
    expect_shape(conv_filters[i], {config.filters_per_width, config.filter_widths[i], config.embed_dim},
                 "conv filters");
    expect_shape(conv_biases[i], {config.filters_per_width}, "conv bias");
  }
  expect_shape(hidden_weight, {config.hidden_dim, config.pooled_dim()}, "hidden weight");
  expect_shape(hidden_bias, {config.hidden_dim}, "hidden bias");
  expect_shape(output_weight, {config.num_classes, config.hidden_dim}, "output weight");
  expect_shape(output_bias, {config.num_classes}, "output bias");
  for (double x : embedding.slice(kPadId)) {
    if (x != 0.0) throw FormatError("PAD embedding row is not zero");
  }
}

ModelParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.embedding = Tensor({config.vocab_size, config.embed_dim});
  fill_uniform(p.embedding, 0.25, rng);
  std::fill(p.embedding.slice(kPadId).begin(), p.embedding.slice(kPadId).end(), 0.0);

  for (std::size_t width : config.filter_widths) {
    Tensor filters({config.filters_per_width, width, config.embed_dim});
    fill_uniform(filters, glorot_limit(width * config.embed_dim, config.filters_per_width), rng);
    p.conv_filters.push_back(std::move(filters));
    p.conv_biases.emplace_back(Shape{config.filters_per_width});
  }
  p.hidden_weight = Tensor({config.hidden_dim, config.pooled_dim()});
  fill_uniform(p.hidden_weight, glorot_limit(config.pooled_dim(), config.hidden_dim), rng);
  p.hidden_bias = Tensor({config.hidden_dim});
  p.output_weight = Tensor({config.num_classes, config.hidden_dim});
  fill_uniform(p.output_weight, glorot_limit(config.hidden_dim, config.num_classes), rng);
  p.output_bias = Tensor({config.num_classes});
  return p;
}

std::vector<Var> ParamVars::all() const {
  std::vector<Var> out{embedding};
  for (std::size_t i = 0; i < conv_filters.size(); ++i) {
    out.push_back(conv_filters[i]);
    out.push_back(conv_biases[i]);
  }
  out.insert(out.end(), {hidden_weight, hidden_bias, output_weight, output_bias});
  return out;
}

ParamVars param_vars_from(std::span<const Var> vars, std::size_t num_widths) {
  if (vars.size() != 5 + 2 * num_widths) throw InputError("parameter handle count does not match widths");
  ParamVars pv;
  std::size_t k = 0;
  pv.embedding = vars[k++];
  for (std::size_t i = 0; i < num_widths; ++i) {
    pv.conv_filters.push_back(vars[k++]);
    pv.conv_biases.push_back(vars[k++]);
  }
  pv.hidden_weight = vars[k++];
  pv.hidden_bias = vars[k++];
  pv.output_weight = vars[k++];
  pv.output_bias = vars[k++];
  return pv;
}

ParamVars bind_params(Tape& tape, const ModelParams& params) {
  std::vector<Var> vars;
  for (const Tensor* t : params.tensors()) vars.push_back(tape.parameter(*t));
  return param_vars_from(vars, params.conv_filters.size());
}

Var forward(Tape& tape, const EncoderConfig& config, const ParamVars& vars, std::span<const TokenId> doc) {
  if (doc.size() != config.doc_len) {
    throw InputError("forward: document has " + std::to_string(doc.size()) + " ids, expected " +
                     std::to_string(config.doc_len));
  }
  const Var embedded = tape.embed_lookup(doc, vars.embedding);
  std::vector<Var> pooled;
  pooled.reserve(vars.conv_filters.size());
  for (std::size_t i = 0; i < vars.conv_filters.size(); ++i) {
    Var conv = tape.conv1d_valid(embedded, vars.conv_filters[i], vars.conv_biases[i]);
    if (config.conv_relu) conv = tape.relu(conv);
    pooled.push_back(tape.max_over_time(conv));
  }
  const Var features = tape.concat(pooled);
  const Var hidden = tape.relu(tape.dense(features, vars.hidden_weight, vars.hidden_bias));
  return tape.dense(hidden, vars.output_weight, vars.output_bias);
}

Tensor forward(const EncoderConfig& config, const ModelParams& params, std::span<const TokenId> doc) {
  Tape tape;
  const ParamVars vars = bind_params(tape, params);
  return tape.value(forward(tape, config, vars, doc));
}

std::size_t load_pretrained_embeddings(ModelParams& params, std::istream& source, const Vocabulary& vocab) {
  const std::size_t dim = params.embedding.rank() == 2 ? params.embedding.dim(1) : 0;
  std::unordered_set<TokenId> replaced;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> values;
    std::string field;
    while (fields >> field) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != field.size() || !std::isfinite(v)) {
        throw FormatError("pretrained vectors line " + std::to_string(line_no) + ": '" + field +
                          "' is not a finite number");
      }
      values.push_back(v);
    }
    if (line_no == 1 && values.size() == 1 && dim != 1 &&
        token.find_first_not_of("0123456789") == std::string::npos) {
      continue;  // word2vec "<count> <dim>" header
    }
    if (values.size() != dim) {
      throw FormatError("pretrained vectors line " + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values, found " + std::to_string(values.size()));
    }
    const auto id = vocab.find(token);
    if (!id || static_cast<std::size_t>(*id) >= params.embedding.dim(0)) continue;
    std::copy(values.begin(), values.end(), params.embedding.slice(static_cast<std::size_t>(*id)).begin());
    replaced.insert(*id);
  }
  return replaced.size();
}

}  // namespace doc
