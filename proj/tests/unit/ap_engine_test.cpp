#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "expertlens/average_precision.hpp"
#include "expertlens/rng.hpp"
#include "oracles/oracles.hpp"

namespace el = expertlens;

namespace {

double ap(const std::vector<double>& s, const std::vector<std::uint8_t>& l) { return el::average_precision(s, l); }

el::ActivationDump dump_from_columns(const std::vector<std::vector<float>>& cols, std::size_t n_sent) {
  el::ActivationDump d;
  d.map = el::NeuronMap::uniform(1, static_cast<std::uint32_t>(cols.size()), 0);
  for (std::size_t s = 0; s < n_sent; ++s) d.sentence_ids.push_back(1000 + s);
  d.values.resize(n_sent * cols.size());
  for (std::size_t s = 0; s < n_sent; ++s)
    for (std::size_t n = 0; n < cols.size(); ++n) d.values[s * cols.size() + n] = cols[n][s];
  return d;
}

el::ConceptManifest manifest_for(const el::ActivationDump& d, std::size_t n_pos) {
  el::ConceptManifest m;
  m.concept_name = "c";
  for (std::size_t s = 0; s < d.n_sentences(); ++s) {
    m.entries.push_back({d.sentence_ids[s], s < n_pos ? el::Label::kPositive : el::Label::kNegative, 0,
                         el::PromptType::kOther});
  }
  return m;
}

}  // namespace

TEST(PoolTokens, Examples) {
  const std::vector<float> a{1.0f, -2.0f, 3.0f}, b{1.0f, 2.0f, 3.0f};
  EXPECT_EQ(el::pool_tokens(a, el::Pooling::kMax), 3.0);
  EXPECT_EQ(el::pool_tokens(b, el::Pooling::kMean), 2.0);
  EXPECT_THROW(el::pool_tokens(std::span<const float>{}, el::Pooling::kMax), el::ValidationError);
}

TEST(PoolTokens, MatchesNaiveLoop) {
  el::CounterRng rng(8);
  std::vector<float> v(128);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  double mx = -1e300, sum = 0.0;
  for (float x : v) {
    if (x > mx) mx = x;
    sum += x;
  }
  EXPECT_EQ(el::pool_tokens(v, el::Pooling::kMax), mx);
  EXPECT_NEAR(el::pool_tokens(v, el::Pooling::kMean), sum / 128.0, 1e-15);
}

TEST(AveragePrecision, WorkedExample) { EXPECT_NEAR(ap({0.9, 0.8, 0.7}, {1, 0, 1}), 5.0 / 6.0, 1e-15); }

TEST(AveragePrecision, PerfectSeparation) { EXPECT_EQ(ap({5, 4, 3, 2, 1}, {1, 1, 0, 0, 0}), 1.0); }

TEST(AveragePrecision, ConstantScoresArePessimistic) {
  EXPECT_EQ(ap({0.3, 0.3}, {1, 0}), 0.5);
  EXPECT_EQ(oracle::brute_force_ap({0.3, 0.3}, {1, 0}), 0.5);
}

TEST(AveragePrecision, Errors) {
  EXPECT_THROW(ap({1, 2}, {1, 1}), el::ValidationError);
  EXPECT_THROW(ap({1, 2}, {0, 0}), el::ValidationError);
  EXPECT_THROW(ap({1, 2, 3}, {0, 1}), el::ValidationError);
  EXPECT_THROW(ap({1, NAN}, {0, 1}), el::ValidationError);
}

TEST(AveragePrecision, MatchesBruteForceOracleWithTies) {
  el::CounterRng rng(12345);
  for (int c = 0; c < 300; ++c) {
    const std::size_t n = 2 + rng.below(11);
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    std::vector<int> li(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(4)) / 4.0;  // heavy ties
      l[i] = li[i] = static_cast<int>(rng.below(2));
    }
    l[0] = li[0] = 1;
    l[1] = li[1] = 0;
    EXPECT_NEAR(ap(s, l), oracle::brute_force_ap(s, li), 1e-12) << "case " << c;
  }
}

TEST(AveragePrecision, InvariantUnderStrictlyIncreasingMaps) {
  el::CounterRng rng(3);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 5 + rng.below(40);
    std::vector<double> s(n), t(n);
    std::vector<std::uint8_t> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.normal() * 4.0) / 4.0;
      t[i] = std::exp(3.0 * s[i]) + 7.0;
      l[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    l[0] = 1;
    l[1] = 0;
    EXPECT_DOUBLE_EQ(ap(s, l), ap(t, l));
  }
}

TEST(AveragePrecision, InvariantUnderJointPermutationWithoutTies) {
  el::CounterRng rng(4);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 5 + rng.below(40);
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.normal();
      l[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    l[0] = 1;
    l[1] = 0;
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    rng.shuffle(std::span(p));
    std::vector<double> s2(n);
    std::vector<std::uint8_t> l2(n);
    for (std::size_t i = 0; i < n; ++i) {
      s2[i] = s[p[i]];
      l2[i] = l[p[i]];
    }
    EXPECT_EQ(ap(s, l), ap(s2, l2));
  }
}

TEST(AveragePrecision, BoundsAndPerfectIff) {
  el::CounterRng rng(5);
  for (int c = 0; c < 200; ++c) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(5));
      l[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    l[0] = 1;
    l[1] = 0;
    const double v = ap(s, l);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    double min_pos = 1e9, max_neg = -1e9;
    for (std::size_t i = 0; i < n; ++i) {
      if (l[i]) {
        min_pos = std::min(min_pos, s[i]);
      } else {
        max_neg = std::max(max_neg, s[i]);
      }
    }
    EXPECT_EQ(v == 1.0, min_pos > max_neg);
  }
}

TEST(ScoreAllNeurons, SingleNeuronEqualToLabels) {
  const auto d = dump_from_columns({{1, 1, 0, 0, 0}}, 5);
  const auto a = el::score_all_neurons(d, manifest_for(d, 2));
  ASSERT_EQ(a.scores.size(), 1u);
  EXPECT_EQ(a.scores[0], 1.0f);
  EXPECT_EQ(a.n_pos, 2u);
  EXPECT_EQ(a.n_neg, 3u);
}

TEST(ScoreAllNeurons, ConstantNeuronClosedForm) {
  const std::size_t n_pos = 400, n_neg = 1000;
  const auto d = dump_from_columns({std::vector<float>(n_pos + n_neg, 0.25f)}, n_pos + n_neg);
  const auto a = el::score_all_neurons(d, manifest_for(d, n_pos));
  double closed = 0.0;
  for (std::size_t k = 1; k <= n_pos; ++k) closed += static_cast<double>(k) / static_cast<double>(n_neg + k);
  closed /= static_cast<double>(n_pos);
  EXPECT_EQ(a.scores[0], static_cast<float>(closed));
}

TEST(ScoreAllNeurons, PlantedExpertAndChanceLevel) {
  const std::size_t n_pos = 100, n_neg = 250, n_neur = 40;
  el::CounterRng rng(77);
  std::vector<std::vector<float>> cols(n_neur, std::vector<float>(n_pos + n_neg));
  for (auto& c : cols)
    for (auto& v : c) v = static_cast<float>(rng.normal());
  for (std::size_t s = 0; s < n_pos + n_neg; ++s) cols[7][s] = s < n_pos ? 1.0f : 0.0f;
  const auto d = dump_from_columns(cols, n_pos + n_neg);
  const auto a = el::score_all_neurons(d, manifest_for(d, n_pos));
  EXPECT_EQ(a.scores[7], 1.0f);
  double sum = 0.0;
  for (std::size_t n = 0; n < n_neur; ++n) {
    if (n == 7) continue;
    EXPECT_LT(a.scores[n], 0.5f);
    sum += a.scores[n];
  }
  EXPECT_NEAR(sum / (n_neur - 1), static_cast<double>(n_pos) / (n_pos + n_neg), 0.05);
}

TEST(ScoreAllNeurons, WorkerCountDoesNotChangeResult) {
  el::CounterRng rng(9);
  std::vector<std::vector<float>> cols(1000, std::vector<float>(120));
  for (auto& c : cols)
    for (auto& v : c) v = static_cast<float>(std::round(rng.normal() * 2.0));
  const auto d = dump_from_columns(cols, 120);
  const auto m = manifest_for(d, 40);
  const auto one = el::score_all_neurons(d, m, {1, 64});
  const auto many = el::score_all_neurons(d, m, {6, 64});
  const auto other_block = el::score_all_neurons(d, m, {3, 17});
  EXPECT_EQ(one.scores, many.scores);
  EXPECT_EQ(one.scores, other_block.scores);
}

TEST(ScoreAllNeurons, ColumnsMatchGenericAveragePrecision) {
  el::CounterRng rng(31);
  const std::size_t n_sent = 90;
  const std::vector<float> palette{-0.0f, 0.0f, -1.5f, 2.25f, 1e-30f, -1e30f, 3.4e38f, -3.4e38f};
  std::vector<std::vector<float>> cols(300, std::vector<float>(n_sent));
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (auto& v : cols[c]) v = c % 2 ? palette[rng.below(palette.size())] : static_cast<float>(rng.normal());
  auto d = dump_from_columns(cols, n_sent);
  auto m = manifest_for(d, 0);
  std::vector<std::uint8_t> labels(n_sent);
  for (std::size_t s = 0; s < n_sent; ++s) {
    labels[s] = rng.below(3) == 0;
    m.entries[s].label = labels[s] ? el::Label::kPositive : el::Label::kNegative;
  }
  const auto a = el::score_all_neurons(d, m, {1, 32});
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const double expected = el::average_precision(std::span<const float>(cols[c]), std::span<const std::uint8_t>(labels));
    EXPECT_EQ(a.scores[c], static_cast<float>(expected)) << c;
  }
}

TEST(ScoreAllNeurons, MissingSentenceIsAnError) {
  const auto d = dump_from_columns({{1, 0}}, 2);
  auto m = manifest_for(d, 1);
  m.entries.push_back({424242, el::Label::kNegative, 0, el::PromptType::kOther});
  EXPECT_THROW(el::score_all_neurons(d, m), el::ValidationError);
}

TEST(ApvFormat, RoundTrip) {
  const auto d = dump_from_columns({{1, 0, 0}, {0.5f, 0.2f, 0.9f}}, 3);
  auto a = el::score_all_neurons(d, manifest_for(d, 1));
  a.checkpoint = "cp";
  const auto path = std::filesystem::temp_directory_path() / ("apv_" + std::to_string(::getpid()) + ".apv");
  el::write_apv(a, path);
  EXPECT_EQ(el::read_apv(path), a);
  std::filesystem::remove(path);
  std::filesystem::remove(el::apv_sidecar_path(path));
}
