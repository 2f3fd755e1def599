#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "expertlens/synth.hpp"
#include "expertlens/average_precision.hpp"
#include "expertlens/expert_sets.hpp"

namespace el = expertlens;

namespace {

el::SynthConfig base_config(std::uint64_t seed) {
  el::SynthConfig cfg;
  cfg.map = el::NeuronMap::uniform(2, 800, 200);
  cfg.concepts = {"a", "b", "c"};
  cfg.experts_per_concept = 50;
  cfg.pool_size = 200;
  cfg.pos_size = 150;
  cfg.neg_size = 400;
  cfg.n_background = 10;
  cfg.background_pool_size = 100;
  cfg.seed = seed;
  return cfg;
}

el::APVector score(const el::SynthWorld& w, const std::string& c, std::size_t cp = 0) {
  auto [dump, man] = w.concept_context(c, cp);
  return el::score_all_neurons(dump, man);
}

}  // namespace

TEST(Synth, PlantedSetsAreDisjointAndSized) {
  const el::SynthWorld w(base_config(1));
  EXPECT_EQ(w.target_concepts().size(), 3u);
  EXPECT_EQ(w.all_concepts().size(), 13u);
  EXPECT_EQ(w.all_concepts()[3], "background-0000");
  for (const auto& c : w.target_concepts()) EXPECT_EQ(w.planted(c).size(), 50u);
  EXPECT_EQ(el::intersection_size(w.planted("a"), w.planted("b")), 0u);
  EXPECT_EQ(w.n_sentences(), 3u * 200u + 10u * 100u);
}

TEST(Synth, BitIdenticalDumps) {
  const el::SynthWorld w1(base_config(2)), w2(base_config(2));
  const auto d1 = w1.full_dump(0, 1), d2 = w2.full_dump(0, 3);
  EXPECT_EQ(d1.sentence_ids, d2.sentence_ids);
  EXPECT_EQ(0, std::memcmp(d1.values.data(), d2.values.data(), d1.values.size() * sizeof(float)));
  EXPECT_EQ(w1.ground_truth().dump(), w2.ground_truth().dump());
  const el::SynthWorld w3(base_config(3));
  EXPECT_NE(w1.planted("a"), w3.planted("a"));
}

TEST(Synth, RowsAreConsistentAcrossSubsets) {
  const el::SynthWorld w(base_config(4));
  const auto full = w.full_dump();
  const std::vector<std::size_t> rows{5, 17, 900};
  const auto part = w.dump_rows(rows, 0);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t n = 0; n < full.n_neurons(); n += 97) EXPECT_EQ(part.at(i, n), full.at(rows[i], n));
}

TEST(Synth, ZeroShiftIsChance) {
  auto cfg = base_config(5);
  cfg.shift = 0.0;
  const el::SynthWorld w(cfg);
  const auto ap = score(w, "a");
  const auto& planted = w.planted("a");
  std::vector<double> p, other;
  for (std::size_t i = 0; i < ap.size(); ++i)
    (std::binary_search(planted.begin(), planted.end(), i) ? p : other).push_back(ap.scores[i]);
  const double mo = el::mean(other);
  double var = 0.0;
  for (double x : other) var += (x - mo) * (x - mo);
  const double sd = std::sqrt(var / static_cast<double>(other.size() - 1));
  EXPECT_NEAR(el::mean(p), mo, 3.0 * sd / std::sqrt(static_cast<double>(p.size())));
}

TEST(Synth, ShiftFourRecoversPlantedExperts) {
  const el::SynthWorld w(base_config(6));
  for (const auto& c : w.target_concepts()) {
    const auto ap = score(w, c);
    for (auto id : w.planted(c)) EXPECT_GE(ap.scores[id], 0.95f);
    EXPECT_EQ(el::extract_experts(ap, 0.9).ids, w.planted(c));
    EXPECT_EQ(el::top_k_experts(ap, 50).ids, w.planted(c));
  }
}

TEST(Synth, SharingFractionGivesExpectedJaccard) {
  auto cfg = base_config(7);
  cfg.sharing = {{"a", "b", 0.5}};
  const el::SynthWorld w(cfg);
  EXPECT_EQ(el::intersection_size(w.planted("a"), w.planted("b")), 25u);
  const auto sa = el::extract_experts(score(w, "a"), 0.5), sb = el::extract_experts(score(w, "b"), 0.5);
  EXPECT_NEAR(el::jaccard(sa, sb), 1.0 / 3.0, 0.05);
  cfg.sharing = {{"zzz", "b", 0.5}};
  EXPECT_THROW(el::SynthWorld{cfg}, el::ValidationError);
}

TEST(Synth, DriftReplacesFractionPerCheckpoint) {
  auto cfg = base_config(8);
  cfg.checkpoints = {"1k", "10k", "100k"};
  cfg.drift = 0.1;
  const el::SynthWorld w(cfg);
  for (std::size_t cp = 0; cp + 1 < 3; ++cp) {
    EXPECT_NEAR(el::jaccard(std::span<const std::uint64_t>(w.planted("a", cp)), w.planted("a", cp + 1)), 45.0 / 55.0,
                1e-12);
  }
  const auto ap2 = score(w, "a", 2);
  EXPECT_EQ(el::top_k_experts(ap2, 50).ids, w.planted("a", 2));
}

TEST(Synth, HierarchyCores) {
  auto cfg = base_config(9);
  cfg.concepts.clear();
  cfg.domains = {{"animals", {"cat", "dog", "cow"}, "animal", 10, 1.0}, {"tools", {"saw", "axe"}, "tool", 20, 0.5}};
  const auto w = el::generate_synthetic_hierarchy(cfg);
  EXPECT_EQ(w.target_concepts().size(), 7u);
  EXPECT_EQ(w.all_concepts()[0], "cat");
  EXPECT_EQ(w.all_concepts()[3], "animal");
  const auto& core = w.planted_core("animals");
  EXPECT_EQ(core.size(), 10u);
  for (const auto& c : {"cat", "dog", "cow", "animal"}) {
    EXPECT_EQ(el::intersection_size(core, w.planted(c)), 10u);
  }
  EXPECT_EQ(el::intersection_size(w.planted_core("tools"), w.planted("tool")), 10u);
  EXPECT_EQ(el::intersection_size(w.planted("cat"), w.planted("saw")), 0u);
  EXPECT_EQ(w.domain_specs().size(), 2u);
  EXPECT_EQ(w.ground_truth()["domains"][0]["core"].size(), 10u);
}

TEST(Synth, ConfigValidation) {
  auto cfg = base_config(10);
  cfg.experts_per_concept = 5000;
  EXPECT_THROW(el::SynthWorld{cfg}, el::ValidationError);
  cfg = base_config(10);
  cfg.concepts = {"a", "a"};
  EXPECT_THROW(el::SynthWorld{cfg}, el::ValidationError);
  cfg = base_config(10);
  cfg.pos_size = 500;
  EXPECT_THROW(el::SynthWorld{cfg}, el::ValidationError);
  cfg = base_config(10);
  cfg.concepts.clear();
  for (int i = 0; i < 41; ++i) cfg.concepts.push_back("c" + std::to_string(i));
  EXPECT_THROW(el::SynthWorld{cfg}, el::ValidationError);  // 41 x 50 > 2000 neurons
}
