// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doc/calibration.hpp"
#include "doc/cli.hpp"
#include "doc/evaluator.hpp"
#include "doc/head.hpp"
#include "doc/simd.hpp"
#include "doc/trainer.hpp"
#include "test_support.hpp"

namespace {

using namespace doc;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------
// 1. gradients of the full network and loss on random tiny configurations

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  const int seeds = 25;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 7919 + 1);
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    EncoderConfig c;
    c.vocab_size = pick(3, 20);
    c.embed_dim = pick(1, 8);
    c.num_classes = pick(2, 4);
    std::vector<std::size_t> widths{1, 2, 3, 4, 5};
    std::shuffle(widths.begin(), widths.end(), rng);
    widths.resize(pick(1, 3));
    std::sort(widths.begin(), widths.end());
    c.filter_widths = widths;
    c.doc_len = pick(std::max<std::size_t>(widths.back(), 2), 12);
    c.filters_per_width = pick(1, 4);
    c.hidden_dim = pick(2, 6);
    c.conv_relu = rng() % 2 == 0;

    ModelParams p = init_params(c, rng());
    for (auto& b : p.conv_biases) b = testing::random_tensor(b.shape(), rng, 0.2);
    p.hidden_bias = testing::random_tensor(p.hidden_bias.shape(), rng, 0.2);
    p.output_bias = testing::random_tensor(p.output_bias.shape(), rng, 0.2);

    std::vector<std::vector<TokenId>> docs;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0, n = pick(1, 3); i < n; ++i) {
      docs.push_back(testing::random_ids(c.doc_len, c.vocab_size, rng));
      labels.push_back(pick(0, c.num_classes - 1));
    }
    const ScalarFunction f = [&](Tape& tape, std::span<const Var> vars) {
      const ParamVars pv = param_vars_from(vars, c.filter_widths.size());
      std::vector<Var> losses;
      for (std::size_t i = 0; i < docs.size(); ++i) {
        losses.push_back(tape.loss(forward(tape, c, pv, docs[i]), head_loss(HeadKind::kOneVsRest, labels[i])));
      }
      return tape.sum_scalars(losses);
    };
    const auto tensors = p.tensors();
    worst = std::max(worst, grad_check(f, tensors, 1e-6));
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-4 && elapsed < 30.0, "max relative error " + fmt("%.2e", worst) + " over " +
                                              std::to_string(seeds) + " seeds in " + fmt("%.1f", elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// 2. sigma against the literal mirrored point set

double literal_mirrored_sigma(const std::vector<double>& probs) {
  std::vector<double> points = probs;
  for (double p : probs) points.push_back(1.0 + (1.0 - p));
  const double mean = std::accumulate(points.begin(), points.end(), 0.0) / static_cast<double>(points.size());
  double var = 0.0;
  for (double x : points) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(points.size()));
}

Outcome calibration_oracle() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(1 + rng() % 50);
    const double floor = unit(rng);
    for (double& x : p) x = std::max(1e-12, floor + (1.0 - floor) * unit(rng));
    worst = std::max(worst, std::abs(fit_sigma(p) - literal_mirrored_sigma(p)));
  }
  const bool examples = std::abs(fit_sigma(std::vector<double>{0.9, 1.0}) - 0.0707107) < 5e-8 &&
                        fit_sigma(std::vector<double>{0.5}) == 0.5 &&
                        fit_sigma(std::vector<double>{1.0, 1.0, 1.0}) == 0.0;

  bool exact = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const double sigma = unit(rng) * 0.4, alpha = 0.1 + 10 * unit(rng);
    exact = exact && ThresholdVector::from_sigmas({sigma}, alpha).thresholds[0] == std::max(0.5, 1.0 - alpha * sigma);
  }
  // Through the fitting path on a small random model.
  const EncoderConfig c = testing::tiny_config(15, 3);
  const ModelParams params = init_params(c, 3);
  std::vector<EncodedDocument> docs;
  for (std::size_t i = 0; i < 30; ++i) docs.push_back({testing::random_ids(c.doc_len, c.vocab_size, rng), "x", i % 3});
  for (double alpha : {0.5, 3.0, 40.0}) {
    const ThresholdVector tv = fit_thresholds(c, params, docs, alpha);
    for (std::size_t i = 0; i < tv.size(); ++i) {
      exact = exact && tv.thresholds[i] == std::max(0.5, 1.0 - alpha * tv.sigmas[i]);
    }
  }
  return {worst <= 1e-12 && examples && exact,
          "max |closed form - literal| " + fmt("%.1e", worst) + " on 1000 inputs, examples " +
              (examples ? "match" : "MISMATCH") + ", threshold rule " + (exact ? "exact" : "NOT exact")};
}

// ---------------------------------------------------------------------------
// 3. open-set decision rule against a brute-force version

Outcome decision_rule_oracle() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t mismatches = 0, all_below = 0, one_above = 0, mixed = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t m = 1 + rng() % 8;
    std::vector<double> p(m), t(m);
    switch (trial % 4) {
      case 0:  // unconstrained
        for (std::size_t i = 0; i < m; ++i) p[i] = unit(rng), t[i] = unit(rng);
        break;
      case 1:  // every probability strictly under its threshold
        for (std::size_t i = 0; i < m; ++i) p[i] = 0.9 * unit(rng), t[i] = p[i] + (1.0 - p[i]) * (0.01 + 0.99 * unit(rng));
        break;
      case 2: {  // exactly one clears its threshold
        const std::size_t k = rng() % m;
        for (std::size_t i = 0; i < m; ++i) {
          t[i] = 0.5 + 0.5 * unit(rng);
          p[i] = i == k ? t[i] + (1.0 - t[i]) * unit(rng) : t[i] * unit(rng) * 0.999;
        }
        break;
      }
      default:  // coarse grid: ties between classes and p == t
        for (std::size_t i = 0; i < m; ++i) p[i] = (1 + rng() % 9) / 10.0, t[i] = (1 + rng() % 9) / 10.0;
    }
    bool reject = true;
    for (std::size_t i = 0; i < m; ++i) reject = reject && p[i] < t[i];
    std::size_t best = 0;
    for (std::size_t i = 1; i < m; ++i) best = p[i] > p[best] ? i : best;
    const OpenPrediction want = reject ? OpenPrediction::reject() : OpenPrediction::accept(best, p[best]);
    mismatches += predict_open(p, t) == want ? 0 : 1;

    std::size_t above = 0;
    for (std::size_t i = 0; i < m; ++i) above += p[i] >= t[i] ? 1 : 0;
    all_below += above == 0 ? 1 : 0;
    one_above += above == 1 ? 1 : 0;
    mixed += !reject && p[best] < t[best] ? 1 : 0;
  }
  const bool covered = all_below > 0 && one_above > 0 && mixed > 0;
  return {mismatches == 0 && covered,
          std::to_string(mismatches) + " mismatches in 10000 cases (all below " + std::to_string(all_below) +
              ", one above " + std::to_string(one_above) + ", argmax under its own threshold " +
              std::to_string(mixed) + ")"};
}

// ---------------------------------------------------------------------------
// 4. macro-F1 against counts recomputed from raw pairs

double pairwise_macro_f1(std::size_t m, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  bool reject_used = false;
  for (auto [g, p] : pairs) reject_used = reject_used || g == m || p == m;
  double total = 0.0;
  std::size_t labels = 0;
  for (std::size_t c = 0; c <= m; ++c) {
    if (c == m && !reject_used) continue;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (auto [g, p] : pairs) {
      tp += g == c && p == c;
      fp += g != c && p == c;
      fn += g == c && p != c;
    }
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    total += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    ++labels;
  }
  return total / static_cast<double>(labels);
}

Outcome macro_f1_oracle() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng() % 6;
    const bool closed = trial % 5 == 0;
    ConfusionMatrix cm(m);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t g = 0; g <= m; ++g) {
      for (std::size_t p = 0; p <= m; ++p) {
        if (closed && (g == m || p == m)) continue;
        const std::size_t n = rng() % 3 == 0 ? 0 : rng() % 15;
        cm.add(g, p, n);
        for (std::size_t k = 0; k < n; ++k) pairs.emplace_back(g, p);
      }
    }
    if (pairs.empty()) continue;
    worst = std::max(worst, std::abs(macro_f1(cm) - pairwise_macro_f1(m, pairs)));
  }
  ConfusionMatrix example(2);
  const std::uint64_t rows[3][3] = {{8, 1, 1}, {0, 9, 1}, {2, 0, 8}};
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t p = 0; p < 3; ++p) example.add(g, p, rows[g][p]);
  }
  const double worked = macro_f1(example);
  return {worst <= 1e-12 && std::abs(worked - 0.8333) < 5e-5,
          "max difference " + fmt("%.1e", worst) + " on 1000 matrices, worked example " + fmt("%.6f", worked)};
}

// ---------------------------------------------------------------------------
// Desk-scale setup shared by the model-level criteria.

Dataset desk_corpus() { return testing::synthetic_corpus({}); }  // 8 classes x 200 documents

ExperimentSpec desk_spec() {
  ExperimentSpec spec;
  spec.encoder.embed_dim = 50;
  spec.encoder.doc_len = 200;
  spec.base_seed = 2024;
  return spec;
}

// 5. ordering of the three methods with a quarter of the classes seen

Outcome desk_ordering(const Dataset& data) {
  const auto t0 = Clock::now();
  ExperimentSpec spec = desk_spec();
  spec.seen_fractions = {0.25};
  spec.repetitions = 5;
  const ExperimentResult r = run_experiment(spec, data, [&](const std::string& line) {
    std::printf("      %s (%.0f s)\n", line.c_str(), seconds_since(t0));
    std::fflush(stdout);
  });
  const double elapsed = seconds_since(t0);
  const double doc = r.fractions[0].method(kMethodDoc).mean;
  const double half = r.fractions[0].method(kMethodDocHalf).mean;
  const double softmax = r.fractions[0].method(kMethodSoftmax).mean;
  const bool a = doc - half >= 0.02, b = half - softmax >= 0.10;
  return {a && b && elapsed < 600.0,
          "DOC " + fmt("%.4f", doc) + ", DOC(t=0.5) " + fmt("%.4f", half) + ", Softmax " + fmt("%.4f", softmax) +
              "; (a) DOC - DOC(t=0.5) = " + fmt("%+.4f", doc - half) + (a ? " ok" : " FAIL") +
              "; (b) DOC(t=0.5) - Softmax = " + fmt("%+.4f", half - softmax) + (b ? " ok" : " FAIL") + "; " +
              fmt("%.0f", elapsed) + " s"};
}

// Split, encode and wrap one repetition the same way the experiment does.
struct PreparedSplit {
  OpenSplit split;
  EncoderConfig encoder;
  TrainingData data;
  std::vector<EncodedDocument> test;
};

PreparedSplit prepare(const Dataset& dataset, double fraction, std::uint64_t seed, EncoderConfig enc) {
  OpenSplit split = make_open_split(dataset, fraction, seed);
  const Vocabulary vocab = build_split_vocab(dataset, split, enc.vocab_size);
  enc.vocab_size = vocab.size();
  enc.num_classes = split.seen_classes.size();
  auto train = encode_documents(dataset, split.train, split, vocab, enc.doc_len);
  auto val = encode_documents(dataset, split.validation, split, vocab, enc.doc_len);
  auto test = encode_documents(dataset, split.test, split, vocab, enc.doc_len);
  return {std::move(split), enc, TrainingData(std::move(train), std::move(val), enc.num_classes), std::move(test)};
}

// 6. alpha = 1e9 calibration versus the fixed 0.5 override

Outcome clamp_equivalence(const Dataset& dataset) {
  const ExperimentSpec spec = desk_spec();
  const PreparedSplit s = prepare(dataset, 0.5, repetition_seed(spec.base_seed, 0, 0), spec.encoder);
  TrainConfig cfg = spec.training;
  cfg.seed = 6;
  const TrainResult model = train(s.data, s.encoder, cfg);
  const ThresholdVector huge = fit_thresholds(s.encoder, model.params, s.data.train(), 1e9, s.split.seen_classes);
  const ConfusionMatrix a = evaluate(s.encoder, model.params, huge, s.test);
  const ConfusionMatrix b = evaluate(s.encoder, model.params, ThresholdVector::uniform(s.encoder.num_classes, 0.5), s.test);
  const double top = *std::max_element(huge.thresholds.begin(), huge.thresholds.end());
  const double smallest_sigma = *std::min_element(huge.sigmas.begin(), huge.sigmas.end());
  return {a == b && top == 0.5, std::string(a == b ? "identical" : "DIFFERENT") + " confusion matrices over " +
                                    std::to_string(a.total()) + " test documents, max threshold " +
                                    fmt("%.17g", top) + ", smallest sigma " + fmt("%.3e", smallest_sigma)};
}

// 7. byte-identical outputs from the command line

int run_cli(const std::vector<std::string>& args) {
  std::istringstream in;
  std::ostringstream out, err;
  return cli::run(args, in, out, err);
}

Outcome determinism(const Dataset& dataset) {
  testing::TempDir dir;
  const std::string data = (dir / "data.jsonl").string();
  testing::write_dataset(dataset, data);
  const std::vector<std::string> model_flags{"--embed-dim", "50", "--doc-len", "200", "--filters", "16",
                                             "--hidden", "32", "--epochs", "2", "--seed", "7"};
  auto train_to = [&](const std::string& name) {
    std::vector<std::string> args{"train", "--data", data, "--out", (dir / name).string(), "--seen-fraction", "0.5",
                                  "--calibrate"};
    args.insert(args.end(), model_flags.begin(), model_flags.end());
    return run_cli(args);
  };
  auto experiment_to = [&](const std::string& name) {
    std::vector<std::string> args{"experiment", "--data", data,  "--report", (dir / name).string(), "--fractions",
                                  "0.5,1.0",    "--reps", "2",   "--quiet"};
    args.insert(args.end(), model_flags.begin(), model_flags.end());
    return run_cli(args);
  };
  const bool ran = train_to("a.doc") == 0 && train_to("b.doc") == 0 && experiment_to("a.json") == 0 &&
                   experiment_to("b.json") == 0;
  if (!ran) return {false, "a command failed"};
  const std::string ma = testing::read_file(dir / "a.doc"), mb = testing::read_file(dir / "b.doc");
  const std::string ja = testing::read_file(dir / "a.json"), jb = testing::read_file(dir / "b.json");
  const bool models = !ma.empty() && ma == mb, reports = !ja.empty() && ja == jb;
  return {models && reports, "model files " + std::string(models ? "identical" : "DIFFER") + " (" +
                                 std::to_string(ma.size()) + " bytes), experiment reports " +
                                 (reports ? "identical" : "DIFFER") + " (" + std::to_string(ja.size()) + " bytes)"};
}

// 8. closed-world accuracy of both heads with every class seen

Outcome closed_world(const Dataset& dataset) {
  const auto t0 = Clock::now();
  const ExperimentSpec spec = desk_spec();
  const PreparedSplit s = prepare(dataset, 1.0, repetition_seed(spec.base_seed, 0, 0), spec.encoder);
  std::string detail;
  bool pass = true;
  for (HeadKind head : {HeadKind::kOneVsRest, HeadKind::kSoftmax}) {
    TrainConfig cfg = spec.training;
    cfg.head = head;
    cfg.seed = 8;
    const TrainResult model = train(s.data, s.encoder, cfg);
    const double closed = macro_f1(evaluate_closed(s.encoder, model.params, s.test));
    pass = pass && closed >= 0.95;
    detail += std::string(head_name(head)) + " " + fmt("%.4f", closed) + ", ";
    if (head == HeadKind::kOneVsRest) {
      const ThresholdVector tv = fit_thresholds(s.encoder, model.params, s.data.train(), spec.alpha);
      detail += "(with calibrated rejection " + fmt("%.4f", macro_f1(evaluate(s.encoder, model.params, tv, s.test))) +
                "), ";
    }
  }
  return {pass, detail + fmt("%.0f", seconds_since(t0)) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const Dataset corpus = desk_corpus();

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient check of the full network and loss", gradient_correctness},
      {2, "sigma and threshold oracle", calibration_oracle},
      {3, "open-set decision rule oracle", decision_rule_oracle},
      {4, "macro-F1 oracle", macro_f1_oracle},
      {5, "DOC > DOC(t=0.5) > Softmax at 25% seen", [&] { return desk_ordering(corpus); }},
      {6, "alpha 1e9 equals the 0.5 override", [&] { return clamp_equivalence(corpus); }},
      {7, "deterministic train and experiment commands", [&] { return determinism(corpus); }},
      {8, "closed-world macro-F1 >= 0.95 for both heads", [&] { return closed_world(corpus); }},
  };

  std::printf("kernels: %s\n", std::string(simd::backend_name(simd::active_backend())).c_str());
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s  criterion %d: %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%s\n", failed == 0 ? "all criteria passed" : (std::to_string(failed) + " criteria failed").c_str());
  return failed == 0 ? 0 : 1;
}
