#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "doc/errors.hpp"
#include "doc/head.hpp"
#include "doc/math.hpp"

namespace doc {
namespace {

std::vector<double> random_logits(std::size_t m, std::mt19937_64& rng, double scale = 4.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> d(m);
  for (double& x : d) x = dist(rng);
  return d;
}

double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                          std::size_t i, double eps) {
  x[i] += eps;
  const double plus = f(x);
  x[i] -= 2 * eps;
  const double minus = f(x);
  return (plus - minus) / (2 * eps);
}

TEST(OneVsRestLoss, SaturatedCorrectExample) {
  const std::vector<double> d{20.0, -20.0};
  // closed form: two terms of log(1 + e^-20)
  const double expected = 2.0 * std::log1p(std::exp(-20.0));
  EXPECT_NEAR(one_vs_rest_loss(d, 0), expected, 1e-22);
  EXPECT_NEAR(one_vs_rest_loss(d, 0), 4.1223e-9, 1e-12);
}

TEST(OneVsRestLoss, ZeroLogitsGiveMLog2) {
  for (std::size_t m : {2u, 3u, 7u}) {
    const std::vector<double> d(m, 0.0);
    EXPECT_NEAR(one_vs_rest_loss(d, 1), static_cast<double>(m) * std::log(2.0), 1e-14);
  }
}

TEST(OneVsRestLoss, GradientIsSigmoidMinusIndicator) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = random_logits(5, rng);
    const std::size_t label = static_cast<std::size_t>(trial) % 5;
    std::vector<double> grad(5);
    one_vs_rest_loss(d, label, grad);
    for (std::size_t i = 0; i < 5; ++i) {
      const double identity = 1.0 / (1.0 + std::exp(-d[i])) - (i == label ? 1.0 : 0.0);
      EXPECT_NEAR(grad[i], identity, 1e-15);
      const double numeric = central_difference([&](const auto& x) { return one_vs_rest_loss(x, label); }, d, i, 1e-6);
      EXPECT_NEAR(grad[i], numeric, 1e-8);
    }
  }
}

TEST(OneVsRestLoss, MatchesNaiveFormulaInModerateRange) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_logits(4, rng, 6.0);
    const std::size_t label = static_cast<std::size_t>(trial) % 4;
    double naive = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-d[i]));
      naive += i == label ? -std::log(p) : -std::log(1.0 - p);
    }
    EXPECT_NEAR(one_vs_rest_loss(d, label), naive, 1e-12);
  }
}

TEST(OneVsRestLoss, StableForHugeLogits) {
  const std::vector<double> d{-800.0, 900.0};
  const double loss = one_vs_rest_loss(d, 0);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, 1700.0, 1e-9);
}

TEST(OneVsRestLoss, BatchIsOrderInvariantSum) {
  std::mt19937_64 rng(3);
  std::vector<double> flat;
  std::vector<std::size_t> labels;
  for (int j = 0; j < 6; ++j) {
    const auto d = random_logits(3, rng);
    flat.insert(flat.end(), d.begin(), d.end());
    labels.push_back(static_cast<std::size_t>(j) % 3);
  }
  const Tensor batch = Tensor::matrix(6, 3, flat);
  const double total = one_vs_rest_loss(batch, labels);
  // Reverse the rows.
  std::vector<double> rev;
  for (int j = 5; j >= 0; --j) rev.insert(rev.end(), flat.begin() + j * 3, flat.begin() + j * 3 + 3);
  std::vector<std::size_t> rev_labels(labels.rbegin(), labels.rend());
  EXPECT_NEAR(one_vs_rest_loss(Tensor::matrix(6, 3, rev), rev_labels), total, 1e-12);
  EXPECT_GE(total, 0.0);
}

TEST(OneVsRestLoss, LabelOutOfRangeThrows) {
  const std::vector<double> d{0.1, 0.2};
  EXPECT_THROW(one_vs_rest_loss(d, 2), InputError);
  EXPECT_THROW(one_vs_rest_loss(Tensor::matrix(1, 2, {0, 0}), std::vector<std::size_t>{5}), InputError);
}

TEST(SoftmaxLoss, UniformLogits) {
  const std::vector<double> d(4, 1.7);
  EXPECT_NEAR(softmax_loss(d, 2), std::log(4.0), 1e-14);
}

TEST(SoftmaxLoss, SaturatedCorrect) {
  const std::vector<double> d{100.0, 0.0};
  EXPECT_NEAR(softmax_loss(d, 0), 0.0, 1e-40);
  EXPECT_NEAR(softmax_loss(d, 1), 100.0, 1e-12);
}

TEST(SoftmaxLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = random_logits(4, rng);
    const std::size_t label = static_cast<std::size_t>(trial) % 4;
    std::vector<double> grad(4);
    softmax_loss(d, label, grad);
    for (std::size_t i = 0; i < 4; ++i) {
      const double numeric = central_difference([&](const auto& x) { return softmax_loss(x, label); }, d, i, 1e-6);
      const double rel = std::abs(grad[i] - numeric) / std::max({std::abs(grad[i]), std::abs(numeric), 1e-8});
      EXPECT_LT(rel, 1e-6);
    }
  }
}

TEST(SoftmaxLoss, LabelOutOfRangeThrows) {
  EXPECT_THROW(softmax_loss(std::vector<double>{1.0}, 1), InputError);
}

// ---------------------------------------------------------------------------

TEST(PredictOpen, AllBelowRejects) {
  const std::vector<double> p{0.2, 0.3, 0.1}, t(3, 0.5);
  EXPECT_TRUE(predict_open(p, t).rejected());
}

TEST(PredictOpen, OneAboveIsArgmax) {
  const std::vector<double> p{0.2, 0.9, 0.1}, t(3, 0.5);
  EXPECT_EQ(predict_open(p, t), OpenPrediction::accept(1, 0.9));
}

TEST(PredictOpen, GlobalArgmaxWinsEvenBelowOwnThreshold) {
  const std::vector<double> p{0.8, 0.6}, t{0.9, 0.5};
  EXPECT_EQ(predict_open(p, t), OpenPrediction::accept(0, 0.8));
  // The optional variant only lets threshold-clearing classes compete.
  EXPECT_EQ(predict_open(p, t, ArgmaxScope::kAboveThreshold), OpenPrediction::accept(1, 0.6));
}

TEST(PredictOpen, EqualToThresholdIsNotBelow) {
  const std::vector<double> p{0.5, 0.1}, t{0.5, 0.5};
  EXPECT_EQ(predict_open(p, t), OpenPrediction::accept(0, 0.5));
}

TEST(PredictOpen, TieBreaksToLowestIndex) {
  const std::vector<double> p{0.7, 0.9, 0.9}, t(3, 0.5);
  EXPECT_EQ(predict_open(p, t).class_index(), 1u);
}

TEST(PredictOpen, LengthMismatchThrows) {
  const std::vector<double> p{0.7, 0.9}, t(3, 0.5);
  EXPECT_THROW(predict_open(p, t), InputError);
}

TEST(PredictOpen, HalfThresholdRejectsExactlyWhenAllLogitsNegative) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto d = random_logits(4, rng, 2.0);
    const bool all_negative = std::all_of(d.begin(), d.end(), [](double x) { return x < 0.0; });
    const auto probs = sigmoid_probabilities(d);
    EXPECT_EQ(predict_open(probs, std::vector<double>(4, 0.5)).rejected(), all_negative);
  }
}

TEST(PredictOpen, RaisingThresholdsNeverUnrejects) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> p(3), t(3), raised(3);
    for (std::size_t i = 0; i < 3; ++i) {
      p[i] = u(rng);
      t[i] = u(rng);
      raised[i] = t[i] + (1.0 - t[i]) * u(rng);
    }
    if (predict_open(p, t).rejected()) EXPECT_TRUE(predict_open(p, raised).rejected());
  }
}

TEST(PredictOpen, ReportedProbabilityMatchesClass) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(5), t(5);
    for (std::size_t i = 0; i < 5; ++i) {
      p[i] = u(rng);
      t[i] = 0.5 + 0.5 * u(rng);
    }
    for (ArgmaxScope scope : {ArgmaxScope::kAllClasses, ArgmaxScope::kAboveThreshold}) {
      const auto pred = predict_open(p, t, scope);
      if (!pred.rejected()) EXPECT_EQ(pred.probability(), p[pred.class_index()]);
    }
  }
}

TEST(PredictClosed, ArgmaxWithLowestTieBreak) {
  EXPECT_EQ(predict_closed(std::vector<double>{0.1, 0.7, 0.2}), 1u);
  EXPECT_EQ(predict_closed(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_THROW(predict_closed(std::vector<double>{}), InputError);
}

TEST(PredictClosed, SoftmaxPreservesArgmax) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const auto d = random_logits(6, rng, 10.0);
    EXPECT_EQ(predict_closed(softmax_probabilities(d)), predict_closed(d));
  }
}

TEST(HeadNames, RoundTrip) {
  EXPECT_EQ(parse_head(head_name(HeadKind::kOneVsRest)), HeadKind::kOneVsRest);
  EXPECT_EQ(parse_head(head_name(HeadKind::kSoftmax)), HeadKind::kSoftmax);
  EXPECT_THROW(parse_head("svm"), InputError);
}

}  // namespace
}  // namespace doc
