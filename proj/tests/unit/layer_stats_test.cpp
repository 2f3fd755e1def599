#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "expertlens/layer_stats.hpp"
#include "expertlens/rng.hpp"
#include "expertlens/synth.hpp"

namespace el = expertlens;

namespace {

el::APVector apv(std::vector<float> s, const el::NeuronMap& map) {
  el::APVector a;
  a.map = map;
  a.scores = std::move(s);
  return a;
}

}  // namespace

TEST(LayerDistribution, SingleBlock) {
  const auto map = el::NeuronMap::uniform(3, 100, 20);
  const std::vector<std::uint64_t> ids{0, 5, 99};
  const auto d = el::layer_distribution(ids, map);
  ASSERT_EQ(d.buckets.size(), 6u);
  EXPECT_EQ(d.buckets[0].count, 3u);
  EXPECT_DOUBLE_EQ(d.buckets[0].density, 0.03);
  for (std::size_t b = 1; b < 6; ++b) EXPECT_EQ(d.buckets[b].count, 0u);
  EXPECT_DOUBLE_EQ(*d.mean_layer(), 0.0);
}

TEST(LayerDistribution, EmptySetIsAllZero) {
  const auto map = el::NeuronMap::uniform(2, 10, 10);
  const auto d = el::layer_distribution(std::vector<std::uint64_t>{}, map);
  EXPECT_EQ(d.total, 0u);
  for (const auto& b : d.buckets) EXPECT_EQ(b.count, 0u);
  EXPECT_FALSE(d.mean_layer().has_value());
}

TEST(LayerDistribution, UniformIdsGiveEqualDensities) {
  const auto map = el::NeuronMap::uniform(6, 4096, 1024);
  el::CounterRng rng(77);
  std::vector<std::uint64_t> all(map.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  rng.partial_shuffle(std::span(all), 10000);
  std::vector<std::uint64_t> ids(all.begin(), all.begin() + 10000);
  std::sort(ids.begin(), ids.end());
  const auto d = el::layer_distribution(ids, map);
  const double n = 10000.0, total = static_cast<double>(map.size());
  for (const auto& b : d.buckets) {
    const double p = b.units / total;
    const double sd = std::sqrt(n * p * (1.0 - p));
    EXPECT_NEAR(static_cast<double>(b.count), n * p, 3.0 * sd);
  }
}

TEST(LayerDistribution, MapMismatchRejectedAndCsv) {
  const auto map = el::NeuronMap::uniform(2, 10, 5);
  el::ExpertSet s;
  s.concept_name = "c";
  s.map_hash = map.hash() ^ 1;
  s.ids = {1};
  EXPECT_THROW(el::layer_distribution(s, map), el::ValidationError);
  s.map_hash = map.hash();
  const std::vector<el::LayerDistribution> ds{el::layer_distribution(s, map)};
  const auto csv = el::layer_distribution_csv(ds);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.find("c,0.5,0,MLP,10,1,0.1\n"), std::string::npos);
}

TEST(ApHistograms, IdenticalAndDisjoint) {
  const auto map = el::NeuronMap::uniform(1, 6, 0);
  const auto a = apv({0.95f, 0.6f, 0.2f, 0.5f, 0.1f, 1.0f}, map);
  const auto same = el::ap_histograms_shared(a, a, 0.5);
  EXPECT_EQ(same.nonshared_a.total(), 0u);
  EXPECT_EQ(same.nonshared_b.total(), 0u);
  EXPECT_EQ(same.shared_a.total(), 4u);
  EXPECT_EQ(same.shared_a.counts.size(), 50u);
  EXPECT_EQ(same.shared_a.counts.back(), 1u);  // AP = 1 lands in the closed last bin
  EXPECT_EQ(same.shared_a.counts[10], 1u);
  const auto b = apv({0.1f, 0.1f, 0.9f, 0.1f, 0.8f, 0.1f}, map);
  const auto dis = el::ap_histograms_shared(a, b, 0.5);
  EXPECT_EQ(dis.shared_a.total(), 0u);
  EXPECT_EQ(dis.shared_b.total(), 0u);
  EXPECT_EQ(dis.nonshared_a.total(), 4u);
  EXPECT_EQ(dis.nonshared_b.total(), 2u);
}

TEST(ApHistograms, PlantedPairMassesMatchPlantedCounts) {
  el::SynthConfig cfg;
  cfg.map = el::NeuronMap::uniform(2, 400, 100);
  cfg.concepts = {"a", "b"};
  cfg.sharing = {{"a", "b", 0.4}};
  cfg.experts_per_concept = 30;
  cfg.pool_size = 150;
  cfg.pos_size = 120;
  cfg.neg_size = 300;
  cfg.n_background = 10;
  cfg.seed = 8;
  const el::SynthWorld w(cfg);
  auto [da, ma] = w.concept_context("a");
  auto [db, mb] = w.concept_context("b");
  const auto apa = el::score_all_neurons(da, ma), apb = el::score_all_neurons(db, mb);
  const auto h = el::ap_histograms_shared(apa, apb, 0.5);
  EXPECT_EQ(h.n_shared, 12u);
  EXPECT_EQ(h.shared_a.total(), 12u);
  EXPECT_EQ(h.shared_b.total(), 12u);
  EXPECT_EQ(h.nonshared_a.total(), 18u);
  EXPECT_EQ(h.nonshared_b.total(), 18u);
}

TEST(LayerLocation, DeeperGroupDetected) {
  const auto map = el::NeuronMap::uniform(8, 100, 0);
  std::vector<el::LayerDistribution> shallow, deep;
  el::CounterRng rng(2);
  for (int i = 0; i < 15; ++i) {
    std::vector<std::uint64_t> s, d;
    for (int j = 0; j < 20; ++j) {
      s.push_back(rng.below(300));
      d.push_back(500 + rng.below(300));
    }
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
    shallow.push_back(el::layer_distribution(s, map));
    deep.push_back(el::layer_distribution(d, map));
  }
  const auto cmp = el::compare_layer_location(deep, shallow, {2000, 1, 1});
  EXPECT_GT(cmp.test.statistic, 3.0);
  EXPECT_LT(cmp.test.p_value, 0.01);
  const std::vector<el::LayerDistribution> none{el::layer_distribution(std::vector<std::uint64_t>{}, map)};
  EXPECT_THROW(el::compare_layer_location(none, shallow, {10, 1, 1}), el::AnalysisError);
}
