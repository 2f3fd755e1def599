#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "expertlens/expert_sets.hpp"
#include "expertlens/rng.hpp"

namespace el = expertlens;

namespace {

el::APVector apv(std::vector<float> scores, std::string concept_name = "c") {
  el::APVector a;
  a.concept_name = std::move(concept_name);
  a.map = el::NeuronMap::uniform(1, static_cast<std::uint32_t>(scores.size()), 0);
  a.scores = std::move(scores);
  a.n_pos = 1;
  a.n_neg = 1;
  return a;
}

el::ExpertSet set_of(std::vector<std::uint64_t> ids, std::string cp = "cp", double tau = 0.5) {
  el::ExpertSet s;
  s.concept_name = "c";
  s.checkpoint = std::move(cp);
  s.rule = el::SelectionRule::threshold(tau);
  s.ids = std::move(ids);
  return s;
}

el::APVector random_apv(std::size_t n, std::uint64_t seed) {
  el::CounterRng rng(seed);
  std::vector<float> s(n);
  for (auto& v : s) v = static_cast<float>(std::round(rng.uniform() * 100.0) / 100.0);
  return apv(std::move(s));
}

}  // namespace

TEST(ExtractExperts, InclusiveBoundary) {
  const auto s = el::extract_experts(apv({0.9f, 0.5f, 0.49f}), 0.5);
  EXPECT_EQ(s.ids, (std::vector<std::uint64_t>{0, 1}));
}

TEST(ExtractExperts, HighThresholdOnChanceVectorIsEmpty) {
  std::vector<float> chance(1000, 0.286f);
  EXPECT_TRUE(el::extract_experts(apv(chance), 0.99).empty());
}

TEST(ExtractExperts, TauOutsideOpenUnitInterval) {
  EXPECT_THROW(el::extract_experts(apv({0.5f}), 0.0), el::ValidationError);
  EXPECT_THROW(el::extract_experts(apv({0.5f}), 1.0), el::ValidationError);
}

TEST(ExtractExperts, MembershipMatchesThresholdExactly) {
  const auto a = random_apv(500, 1);
  const auto s = el::extract_experts(a, 0.7);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(s.contains(i), a.scores[i] >= 0.7f);
}

TEST(ExtractExperts, AntiMonotoneInTau) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_apv(300, seed);
    std::size_t prev = a.size() + 1;
    el::ExpertSet prev_set = el::extract_experts(a, 0.05);
    for (double tau = 0.1; tau < 0.99; tau += 0.05) {
      const auto s = el::extract_experts(a, tau);
      EXPECT_LE(s.size(), prev);
      EXPECT_TRUE(std::includes(prev_set.ids.begin(), prev_set.ids.end(), s.ids.begin(), s.ids.end()));
      prev = s.size();
      prev_set = s;
    }
  }
}

TEST(TopK, AllNeuronsAndTieRule) {
  const auto a = apv({0.7f, 0.9f, 0.7f});
  EXPECT_EQ(el::top_k_experts(a, 3).ids, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(el::top_k_ranking(a.scores, 2), (std::vector<std::uint64_t>{1, 0}));
  EXPECT_EQ(el::top_k_experts(a, 2).ids, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(el::top_k_experts(a, 10).size(), 3u);
  EXPECT_THROW(el::top_k_experts(a, 0), el::ValidationError);
}

TEST(TopK, MatchesFullSortOracleAtScale) {
  el::CounterRng rng(21);
  std::vector<float> s(350000);
  for (auto& v : s) v = static_cast<float>(std::round(rng.uniform() * 1000.0) / 1000.0);
  const auto a = apv(s);
  std::vector<std::uint64_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return s[x] > s[y]; });
  idx.resize(500);
  EXPECT_EQ(el::top_k_ranking(a.scores, 500), idx);
}

TEST(TopK, Nested) {
  const auto a = random_apv(400, 5);
  for (std::size_t k1 = 1; k1 < 400; k1 += 37) {
    const auto small = el::top_k_experts(a, k1), big = el::top_k_experts(a, k1 + 20);
    EXPECT_TRUE(std::includes(big.ids.begin(), big.ids.end(), small.ids.begin(), small.ids.end()));
  }
}

TEST(Jaccard, Examples) {
  EXPECT_DOUBLE_EQ(el::jaccard(set_of({1, 2, 3}), set_of({2, 3, 4})), 0.5);
  EXPECT_DOUBLE_EQ(el::jaccard(set_of({1, 2, 3}), set_of({1, 2, 3})), 1.0);
  EXPECT_DOUBLE_EQ(el::jaccard(set_of({1, 2}), set_of({3, 4})), 0.0);
  EXPECT_DOUBLE_EQ(el::jaccard(set_of({}), set_of({})), 0.0);
}

TEST(Jaccard, MismatchedMapsRejected) {
  auto a = set_of({1}), b = set_of({1});
  b.map_hash = 99;
  EXPECT_THROW(el::jaccard(a, b), el::ValidationError);
}

TEST(Jaccard, Properties) {
  el::CounterRng rng(31);
  for (int c = 0; c < 200; ++c) {
    std::vector<std::uint64_t> a, b;
    for (std::uint64_t i = 0; i < 60; ++i) {
      if (rng.below(3) == 0) a.push_back(i);
      if (rng.below(3) == 0) b.push_back(i);
    }
    const double ab = el::jaccard(std::span<const std::uint64_t>(a), b);
    EXPECT_EQ(ab, el::jaccard(std::span<const std::uint64_t>(b), a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    if (!a.empty()) {
      EXPECT_EQ(el::jaccard(std::span<const std::uint64_t>(a), a), 1.0);
    }
    const bool disjoint = el::intersection_size(a, b) == 0;
    if (!a.empty() || !b.empty()) {
      EXPECT_EQ(ab == 0.0, disjoint);
    }
  }
}

TEST(CheckpointOverlap, IdenticalDisjointAndDrift) {
  std::vector<el::ExpertSet> same{set_of({1, 2}, "a"), set_of({1, 2}, "b"), set_of({1, 2}, "c")};
  for (const auto& s : el::checkpoint_overlap(same)) EXPECT_EQ(s.jaccard, 1.0);

  std::vector<el::ExpertSet> disjoint{set_of({1}, "a"), set_of({2}, "b"), set_of({3}, "c")};
  for (const auto& s : el::checkpoint_overlap(disjoint)) EXPECT_EQ(s.jaccard, 0.0);

  // 50 members, 5 replaced per step
  std::vector<el::ExpertSet> drift;
  std::vector<std::uint64_t> cur(50);
  std::iota(cur.begin(), cur.end(), 0);
  std::uint64_t next = 1000;
  for (int step = 0; step < 4; ++step) {
    drift.push_back(set_of(cur, "cp" + std::to_string(step)));
    for (int r = 0; r < 5; ++r) cur[static_cast<std::size_t>(step * 5 + r)] = next++;
    std::sort(cur.begin(), cur.end());
  }
  const auto series = el::checkpoint_overlap(drift);
  ASSERT_EQ(series.size(), 3u);
  for (const auto& s : series) EXPECT_NEAR(s.jaccard, 0.9 / 1.1, 1e-12);
  EXPECT_EQ(series[0].from, "cp0");
  EXPECT_EQ(series[0].to, "cp1");
}

TEST(CheckpointOverlap, Errors) {
  std::vector<el::ExpertSet> one{set_of({1})};
  EXPECT_THROW(el::checkpoint_overlap(one), el::ValidationError);
  std::vector<el::ExpertSet> mixed{set_of({1}, "a", 0.5), set_of({1}, "b", 0.6)};
  EXPECT_THROW(el::checkpoint_overlap(mixed), el::ValidationError);
}

TEST(SetSizeStats, ConstantSizesAndScaling) {
  std::vector<el::ExpertSet> sets;
  for (int i = 0; i < 10; ++i) {
    std::vector<std::uint64_t> ids(100);
    std::iota(ids.begin(), ids.end(), static_cast<std::uint64_t>(i));
    auto s = set_of(ids);
    s.model = "m";
    sets.push_back(s);
  }
  const auto g = el::set_size_stats(sets, {{"m", 10000}}, {200, 0.95, 1, 1});
  ASSERT_EQ(g.size(), 1u);
  EXPECT_DOUBLE_EQ(*g[0].mean_log10_size, 2.0);
  EXPECT_EQ(g[0].log_ci->upper - g[0].log_ci->lower, 0.0);
  EXPECT_DOUBLE_EQ(g[0].mean_scaled_size, 0.01);
  EXPECT_DOUBLE_EQ(*g[0].mean_log10_scaled, -2.0);
}

TEST(SetSizeStats, EmptySetsAreFlaggedAndExcluded) {
  std::vector<el::ExpertSet> sets{set_of({}), set_of({1, 2, 3, 4, 5, 6, 7, 8, 9, 10})};
  for (auto& s : sets) s.model = "m";
  const auto g = el::set_size_stats(sets, {{"m", 100}}, {100, 0.95, 1, 1});
  EXPECT_EQ(g[0].n_empty, 1u);
  EXPECT_DOUBLE_EQ(*g[0].mean_log10_size, 1.0);
  EXPECT_DOUBLE_EQ(g[0].mean_size, 5.0);

  std::vector<el::ExpertSet> all_empty{set_of({})};
  all_empty[0].model = "m";
  EXPECT_FALSE(el::set_size_stats(all_empty, {{"m", 100}}, {}).front().mean_log10_size.has_value());
}

TEST(SetSizeStats, GeometricSweepSlope) {
  // planted count halves per 0.1 step of tau: log10 size falls by log10(2) per step
  std::vector<el::ExpertSet> sets;
  std::vector<double> taus, logs;
  std::size_t count = 1600;
  for (int step = 0; step < 5; ++step, count /= 2) {
    const double tau = 0.5 + 0.1 * step;
    for (int rep = 0; rep < 3; ++rep) {
      std::vector<std::uint64_t> ids(count);
      std::iota(ids.begin(), ids.end(), 0);
      auto s = set_of(ids, "cp", tau);
      s.model = "m";
      sets.push_back(s);
    }
  }
  const auto groups = el::set_size_stats(sets, {{"m", 100000}}, {50, 0.95, 1, 1});
  ASSERT_EQ(groups.size(), 5u);
  for (const auto& g : groups) {
    taus.push_back(g.tau);
    logs.push_back(*g.mean_log10_size);
  }
  EXPECT_NEAR(el::ols_slope(taus, logs), std::log10(0.5) / 0.1, 1e-9);
}

TEST(ExpertSetJson, RoundTrip) {
  auto s = set_of({3, 9, 12});
  s.map_hash = 0xabc;
  const auto back = el::expert_set_from_json(el::to_json(s));
  EXPECT_EQ(back.ids, s.ids);
  EXPECT_EQ(back.map_hash, s.map_hash);
  EXPECT_EQ(back.rule, s.rule);
  auto bad = el::to_json(s);
  bad["ids"] = {3, 3};
  EXPECT_THROW(el::expert_set_from_json(bad), el::ValidationError);
}
