#include "doc/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "doc/calibration.hpp"
#include "doc/data.hpp"
#include "doc/encoder.hpp"
#include "doc/errors.hpp"
#include "doc/evaluator.hpp"
#include "doc/model_file.hpp"
#include "doc/simd.hpp"
#include "doc/trainer.hpp"

namespace doc::cli {
namespace {

// Flags shared by `train` and `experiment`.
struct ModelOptions {
  std::size_t embed_dim = 50;
  std::size_t doc_len = 200;
  std::size_t vocab_size = 5000;
  std::size_t filters = 150;
  std::vector<std::size_t> filter_widths{3, 4, 5};
  std::size_t hidden = 250;
  bool no_conv_relu = false;
  std::size_t batch_size = 64;
  int epochs = 20;
  double lr = 1e-3;
  int patience = 3;
  bool freeze_embeddings = false;

  void attach(CLI::App& app) {
    app.add_option("--embed-dim", embed_dim, "Word vector dimension")->capture_default_str();
    app.add_option("--doc-len", doc_len, "Tokens per document after cut/pad")->capture_default_str();
    app.add_option("--vocab-size", vocab_size, "Vocabulary cap including PAD and UNK")->capture_default_str();
    app.add_option("--filters", filters, "Convolution filters per width")->capture_default_str();
    app.add_option("--filter-widths", filter_widths, "Convolution widths, ascending")
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--hidden", hidden, "Width of the first dense layer")->capture_default_str();
    app.add_flag("--no-conv-relu", no_conv_relu, "Pool raw convolution outputs");
    app.add_option("--batch-size", batch_size)->capture_default_str();
    app.add_option("--epochs", epochs, "Maximum epochs")->capture_default_str();
    app.add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    app.add_option("--patience", patience, "Epochs without validation improvement before stopping")
        ->capture_default_str();
    app.add_flag("--freeze-embeddings", freeze_embeddings, "Keep word vectors fixed during training");
  }

  EncoderConfig encoder() const {
    EncoderConfig c;
    c.vocab_size = vocab_size;
    c.embed_dim = embed_dim;
    c.filter_widths = filter_widths;
    c.filters_per_width = filters;
    c.hidden_dim = hidden;
    c.doc_len = doc_len;
    c.conv_relu = !no_conv_relu;
    return c;
  }

  TrainConfig training(std::uint64_t seed, HeadKind head) const {
    TrainConfig t;
    t.batch_size = batch_size;
    t.max_epochs = epochs;
    t.learning_rate = lr;
    t.patience = patience;
    t.seed = seed;
    t.head = head;
    t.freeze_embeddings = freeze_embeddings;
    return t;
  }
};

std::string format_double(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path);
  f << text;
  if (!f) throw FormatError("failed writing " + path);
}

void print_thresholds(std::ostream& out, const ModelFile& model) {
  const ThresholdVector& tv = *model.thresholds;
  std::size_t width = 5;
  for (const auto& c : model.classes) width = std::max(width, c.size());
  out << "class" << std::string(width - 5 + 2, ' ') << "sigma     threshold\n";
  for (std::size_t i = 0; i < tv.size(); ++i) {
    out << model.classes[i] << std::string(width - model.classes[i].size() + 2, ' ')
        << (tv.sigmas.empty() ? std::string("-       ") : format_double(tv.sigmas[i])) << "  "
        << format_double(tv.thresholds[i]) << '\n';
  }
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string report;
  std::string pretrained;
  std::string manifest;
  std::uint64_t seed = 0;
  std::string head = "one_vs_rest";
  double seen_fraction = 1.0;
  bool calibrate = false;
  double alpha = kDefaultAlpha;
  ModelOptions model;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const HeadKind head = parse_head(a.head);
  if (a.calibrate && head != HeadKind::kOneVsRest) {
    throw ConfigurationError("--calibrate needs the one_vs_rest head");
  }
  const Dataset dataset = read_dataset_file(a.data);
  const OpenSplit split = make_open_split(dataset, a.seen_fraction, a.seed);
  const Vocabulary vocab = build_split_vocab(dataset, split, a.model.vocab_size);

  EncoderConfig enc = a.model.encoder();
  enc.vocab_size = vocab.size();
  enc.num_classes = split.seen_classes.size();
  enc.validate();
  const TrainConfig cfg = a.model.training(a.seed, head);

  TrainingData data(encode_documents(dataset, split.train, split, vocab, enc.doc_len),
                    encode_documents(dataset, split.validation, split, vocab, enc.doc_len), enc.num_classes);
  err << "train: " << data.train().size() << " training / " << data.validation().size() << " validation documents, "
      << enc.num_classes << " seen classes, vocabulary " << vocab.size() << ", kernels "
      << simd::backend_name(simd::active_backend()) << '\n';

  std::optional<ModelParams> initial;
  if (!a.pretrained.empty()) {
    std::ifstream vectors(a.pretrained);
    if (!vectors) throw FormatError("cannot open pretrained vectors " + a.pretrained);
    initial = init_params(enc, a.seed);
    const std::size_t replaced = load_pretrained_embeddings(*initial, vectors, vocab);
    err << "train: " << replaced << " embedding rows loaded from " << a.pretrained << '\n';
  }

  TrainResult result = train(data, enc, cfg, initial ? &*initial : nullptr);

  ModelFile model{enc, head, split.seen_classes, vocab, {split.seen_fraction, split.seed}, std::move(result.params),
                  std::nullopt};
  if (a.calibrate) {
    model.thresholds = fit_thresholds(enc, model.params, data.train(), a.alpha, model.classes);
  }
  save_model(model, a.out);

  const std::string report_path = a.report.empty() ? a.out + ".report.json" : a.report;
  write_text_file(report_path, result.report.to_json() + "\n");
  if (!a.manifest.empty()) write_text_file(a.manifest, split_manifest_json(split) + "\n");

  out << "epochs run: " << result.report.train_loss.size() << ", best epoch: " << result.report.best_epoch + 1
      << ", best validation loss: " << format_double(result.report.validation_loss[result.report.best_epoch])
      << (result.report.stopped_early ? " (early stop)" : "") << '\n';
  if (model.thresholds) print_thresholds(out, model);
  out << "model written to " << a.out << ", report to " << report_path << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string model;
  std::string data;
  std::string out;
  double alpha = kDefaultAlpha;
  bool whole_file = false;
};

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out, std::ostream&) {
  ModelFile model = load_model(a.model);
  if (model.head != HeadKind::kOneVsRest) throw ConfigurationError("thresholds apply only to one_vs_rest models");
  const Dataset dataset = read_dataset_file(a.data);

  std::vector<EncodedDocument> docs;
  if (a.whole_file) {
    OpenSplit classes;
    classes.seen_classes = model.classes;
    std::vector<std::size_t> all(dataset.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (!classes.class_index(dataset[i].label)) {
        throw CalibrationError("calibration data has class '" + dataset[i].label + "' unknown to the model");
      }
      all[i] = i;
    }
    docs = encode_documents(dataset, all, classes, model.vocab, model.encoder.doc_len);
  } else {
    OpenSplit split;
    try {
      split = make_open_split(dataset, model.split.seen_fraction, model.split.seed);
    } catch (const InputError& e) {
      throw CalibrationError(std::string("cannot rebuild the training split: ") + e.what());
    }
    if (split.seen_classes != model.classes) {
      throw CalibrationError("data classes do not reproduce the model's seen classes; pass the training dataset "
                             "or use --whole-file with a calibration set");
    }
    docs = encode_documents(dataset, split.train, split, model.vocab, model.encoder.doc_len);
  }
  model.thresholds = fit_thresholds(model.encoder, model.params, docs, a.alpha, model.classes);
  const std::string target = a.out.empty() ? a.model : a.out;
  save_model(model, target);
  out << "alpha = " << format_double(a.alpha, "%g") << ", " << docs.size() << " calibration documents\n";
  print_thresholds(out, model);
  return kSuccess;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string input = "-";
  std::string format = "json";
  std::optional<double> threshold;
  std::string scope = "all";
};

int cmd_predict(const PredictArgs& a, std::istream& in, std::ostream& out, std::ostream&) {
  const ModelFile model = load_model(a.model);
  const bool open = model.head == HeadKind::kOneVsRest;
  ThresholdVector thresholds;
  if (open) {
    if (a.threshold) {
      if (!(*a.threshold >= 0.0 && *a.threshold <= 1.0)) throw ConfigurationError("--t must lie in [0, 1]");
      thresholds = ThresholdVector::uniform(model.encoder.num_classes, *a.threshold);
    } else if (model.thresholds) {
      thresholds = *model.thresholds;
    } else {
      throw ConfigurationError("model has no thresholds; run `doc calibrate` or pass --t 0.5");
    }
  } else if (a.threshold) {
    throw ConfigurationError("--t applies only to one_vs_rest models");
  }
  const ArgmaxScope scope = a.scope == "above" ? ArgmaxScope::kAboveThreshold : ArgmaxScope::kAllClasses;

  std::ifstream file;
  std::istream* source = &in;
  if (a.input != "-") {
    file.open(a.input);
    if (!file) throw FormatError("cannot open input " + a.input);
    source = &file;
  }

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(*source, line)) {
    ++line_no;
    std::string text = line;
    if (!line.empty() && line.front() == '{') {
      try {
        const auto record = nlohmann::json::parse(line);
        text = record.at("text").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("input line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    const auto ids = encode(tokenize(text), model.vocab, model.encoder.doc_len);
    const Tensor logits = forward(model.encoder, model.params, ids);
    std::vector<double> probs;
    std::string label;
    double winning = 0.0;
    if (open) {
      probs = sigmoid_probabilities(logits.data());
      const OpenPrediction p = predict_open(probs, thresholds.thresholds, scope);
      label = p.rejected() ? "REJECT" : model.classes[p.class_index()];
      winning = p.rejected() ? probs[argmax(probs)] : p.probability();
    } else {
      probs = softmax_probabilities(logits.data());
      const std::size_t c = predict_closed(probs);
      label = model.classes[c];
      winning = probs[c];
    }
    if (a.format == "tsv") {
      out << label << '\t' << format_double(winning, "%.17g");
      for (double p : probs) out << '\t' << format_double(p, "%.17g");
      out << '\n';
    } else {
      nlohmann::ordered_json j;
      j["prediction"] = label;
      j["probability"] = winning;
      nlohmann::ordered_json all = nlohmann::ordered_json::object();
      for (std::size_t i = 0; i < probs.size(); ++i) all[model.classes[i]] = probs[i];
      j["probabilities"] = std::move(all);
      out << j.dump() << '\n';
    }
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------

struct ExperimentArgs {
  std::string data;
  std::string report;
  std::vector<double> fractions{0.25, 0.5, 0.75, 1.0};
  std::size_t reps = 10;
  std::uint64_t seed = 0;
  double alpha = kDefaultAlpha;
  bool no_softmax = false;
  bool quiet = false;
  ModelOptions model;
};

int cmd_experiment(const ExperimentArgs& a, std::ostream& out, std::ostream& err) {
  const Dataset dataset = read_dataset_file(a.data);
  ExperimentSpec spec;
  spec.seen_fractions = a.fractions;
  spec.repetitions = a.reps;
  spec.base_seed = a.seed;
  spec.encoder = a.model.encoder();
  spec.training = a.model.training(a.seed, HeadKind::kOneVsRest);
  spec.alpha = a.alpha;
  spec.include_softmax = !a.no_softmax;
  ProgressFn progress;
  if (!a.quiet) progress = [&err](const std::string& msg) { err << msg << '\n'; };
  const ExperimentResult result = run_experiment(spec, dataset, progress);
  write_text_file(a.report, result.to_json() + "\n");
  out << result.to_text();
  return kSuccess;
}

// ---------------------------------------------------------------------------

int cmd_inspect(const std::string& path, std::ostream& out) {
  const ModelFile model = load_model(path);
  const EncoderConfig& c = model.encoder;
  out << "format version:   " << kModelFormatVersion << '\n'
      << "head:             " << head_name(model.head) << '\n'
      << "classes (" << model.classes.size() << "):      ";
  for (std::size_t i = 0; i < model.classes.size(); ++i) out << (i ? ", " : "") << model.classes[i];
  out << '\n'
      << "vocabulary:       " << model.vocab.size() << " (cap " << model.vocab.max_size() << ")\n"
      << "embed dim:        " << c.embed_dim << '\n'
      << "document length:  " << c.doc_len << '\n'
      << "filter widths:    ";
  for (std::size_t i = 0; i < c.filter_widths.size(); ++i) out << (i ? "," : "") << c.filter_widths[i];
  out << " x " << c.filters_per_width << " filters" << (c.conv_relu ? "" : " (no conv ReLU)") << '\n'
      << "hidden dim:       " << c.hidden_dim << '\n'
      << "split:            seen fraction " << format_double(model.split.seen_fraction, "%g") << ", seed "
      << model.split.seed << '\n';
  if (model.thresholds) {
    if (model.thresholds->alpha) out << "alpha:            " << format_double(*model.thresholds->alpha, "%g") << '\n';
    print_thresholds(out, model);
  } else {
    out << "thresholds:       none\n";
  }
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Open-world text classification with a one-vs-rest CNN and calibrated rejection", "doc"};
  app.require_subcommand(1);
  // A later occurrence of a flag overrides an earlier one.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Split a dataset, train a model and save it");
  train_cmd->add_option("--data", train_args.data, "Dataset JSONL ({\"label\", \"text\"} per line)")->required();
  train_cmd->add_option("--out", train_args.out, "Model file to write")->required();
  train_cmd->add_option("--seed", train_args.seed, "Seed for split, init and shuffling")->capture_default_str();
  train_cmd->add_option("--head", train_args.head, "Output head")
      ->check(CLI::IsMember({"one_vs_rest", "softmax"}))
      ->capture_default_str();
  train_cmd->add_option("--seen-fraction", train_args.seen_fraction, "Fraction of classes used for training")
      ->capture_default_str();
  train_cmd->add_flag("--calibrate", train_args.calibrate, "Fit rejection thresholds after training");
  train_cmd->add_option("--alpha", train_args.alpha, "Standard deviations for --calibrate")->capture_default_str();
  train_cmd->add_option("--report", train_args.report, "Training report JSON (default: <out>.report.json)");
  train_cmd->add_option("--pretrained", train_args.pretrained, "Word vectors, one 'token v1 ... ve' per line");
  train_cmd->add_option("--split-manifest", train_args.manifest, "Write the split's document indices as JSON");
  train_args.model.attach(*train_cmd);

  CalibrateArgs cal_args;
  auto* cal_cmd = app.add_subcommand("calibrate", "Fit per-class rejection thresholds into a model file");
  cal_cmd->add_option("--model", cal_args.model, "Model file")->required();
  cal_cmd->add_option("--data", cal_args.data, "Dataset the model was trained on")->required();
  cal_cmd->add_option("--alpha", cal_args.alpha, "Standard deviations below 1")->capture_default_str();
  cal_cmd->add_option("--out", cal_args.out, "Write here instead of updating --model in place");
  cal_cmd->add_flag("--whole-file", cal_args.whole_file,
                    "Use every document of --data (all must be seen classes) instead of the training split");

  PredictArgs pred_args;
  auto* pred_cmd = app.add_subcommand("predict", "Classify or reject each input line");
  pred_cmd->add_option("--model", pred_args.model, "Model file")->required();
  pred_cmd->add_option("--input", pred_args.input, "Text or JSONL lines, '-' for stdin")->capture_default_str();
  pred_cmd->add_option("--format", pred_args.format)->check(CLI::IsMember({"json", "tsv"}))->capture_default_str();
  pred_cmd->add_option("--t", pred_args.threshold, "Use this threshold for every class instead of fitted ones");
  pred_cmd->add_option("--argmax-scope", pred_args.scope, "Classes competing after acceptance")
      ->check(CLI::IsMember({"all", "above"}))
      ->capture_default_str();

  ExperimentArgs exp_args;
  auto* exp_cmd = app.add_subcommand("experiment", "Seen-fraction sweep with repeated random class choices");
  exp_cmd->add_option("--data", exp_args.data, "Dataset JSONL")->required();
  exp_cmd->add_option("--report", exp_args.report, "JSON report path")->required();
  exp_cmd->add_option("--fractions", exp_args.fractions, "Seen fractions")->delimiter(',')->capture_default_str();
  exp_cmd->add_option("--reps", exp_args.reps, "Repetitions per fraction")->capture_default_str();
  exp_cmd->add_option("--seed", exp_args.seed, "Base seed")->capture_default_str();
  exp_cmd->add_option("--alpha", exp_args.alpha)->capture_default_str();
  exp_cmd->add_flag("--no-softmax", exp_args.no_softmax, "Skip the softmax baseline");
  exp_cmd->add_flag("--quiet", exp_args.quiet, "No per-repetition progress on stderr");
  exp_args.model.attach(*exp_cmd);

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print a model file's configuration and thresholds");
  inspect_cmd->add_option("--model", inspect_path, "Model file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    err << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out, err);
    if (*cal_cmd) return cmd_calibrate(cal_args, out, err);
    if (*pred_cmd) return cmd_predict(pred_args, in, out, err);
    if (*exp_cmd) return cmd_experiment(exp_args, out, err);
    if (*inspect_cmd) return cmd_inspect(inspect_path, out);
  } catch (const ConfigurationError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingDivergedError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const CalibrationError& e) {
    err << "calibration error: " << e.what() << '\n';
    return kDataError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace doc::cli
