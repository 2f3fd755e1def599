#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <numeric>
#include <regex>
#include <vector>

#include "expertlens/domains.hpp"
#include "expertlens/synth.hpp"

namespace el = expertlens;

namespace {

el::ExpertSet set_of(std::string name, std::vector<std::uint64_t> ids) {
  el::ExpertSet s;
  s.concept_name = std::move(name);
  s.checkpoint = "cp";
  s.ids = std::move(ids);
  return s;
}

std::vector<std::uint64_t> range(std::uint64_t lo, std::uint64_t hi) {
  std::vector<std::uint64_t> v(hi - lo);
  std::iota(v.begin(), v.end(), lo);
  return v;
}

}  // namespace

TEST(SharedCore, IdenticalAndDisjoint) {
  std::vector<el::ExpertSet> same{set_of("a", {1, 2, 3}), set_of("b", {1, 2, 3}), set_of("c", {1, 2, 3})};
  const auto c1 = el::shared_core(same);
  EXPECT_EQ(c1.ids, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(c1.pct_shared, 100.0);

  std::vector<el::ExpertSet> disjoint{set_of("a", {1}), set_of("b", {2}), set_of("c", {3})};
  const auto c2 = el::shared_core(disjoint);
  EXPECT_TRUE(c2.ids.empty());
  EXPECT_EQ(c2.pct_shared, 0.0);
  EXPECT_FALSE(c2.empty_union);

  std::vector<el::ExpertSet> empty{set_of("a", {}), set_of("b", {})};
  const auto c3 = el::shared_core(empty);
  EXPECT_TRUE(c3.empty_union);
  EXPECT_EQ(c3.pct_shared, 0.0);

  std::vector<el::ExpertSet> one{set_of("a", {1})};
  EXPECT_THROW(el::shared_core(one), el::ValidationError);
}

TEST(BroaderOverlap, Examples) {
  const std::vector<std::uint64_t> core{2, 4};
  EXPECT_DOUBLE_EQ(*el::broader_overlap(core, set_of("x", {1, 2, 3, 4})), 100.0);
  EXPECT_DOUBLE_EQ(*el::broader_overlap(core, set_of("x", {5})), 0.0);
  EXPECT_DOUBLE_EQ(*el::broader_overlap(core, set_of("x", {4})), 50.0);
  EXPECT_FALSE(el::broader_overlap({}, set_of("x", {1})).has_value());
}

TEST(DomainSpec, Validation) {
  EXPECT_THROW((el::DomainSpec{"d", {"a", "a"}, "b"}.validate()), el::ValidationError);
  EXPECT_THROW((el::DomainSpec{"d", {"a", "b"}, "b"}.validate()), el::ValidationError);
  EXPECT_THROW((el::DomainSpec{"d", {"a"}, "b"}.validate()), el::ValidationError);
  const el::DomainSpec ok{"d", {"a", "c"}, "b"};
  EXPECT_NO_THROW(ok.validate());
  const auto back = el::domain_from_json(el::to_json(ok));
  EXPECT_EQ(back.specifics, ok.specifics);
  EXPECT_EQ(back.broader, "b");
}

TEST(RandomBaseline, PlantedCoresBeatBaseline) {
  // 4 domains: specifics share ids [100d, 100d+10); every concept has 40 private ids
  std::map<std::string, el::ExpertSet> sets;
  std::vector<el::DomainSpec> domains;
  std::uint64_t next = 10000;
  for (std::uint64_t d = 0; d < 4; ++d) {
    el::DomainSpec spec{"dom" + std::to_string(d), {}, "broad" + std::to_string(d)};
    const auto core = range(100 * d, 100 * d + 10);
    for (int s = 0; s < 4; ++s) {
      auto ids = core;
      const auto priv = range(next, next + 40);
      next += 40;
      ids.insert(ids.end(), priv.begin(), priv.end());
      const std::string name = spec.name + "-s" + std::to_string(s);
      sets[name] = set_of(name, ids);
      spec.specifics.push_back(name);
    }
    auto ids = core;
    const auto priv = range(next, next + 40);
    next += 40;
    ids.insert(ids.end(), priv.begin(), priv.end());
    sets[spec.broader] = set_of(spec.broader, ids);
    domains.push_back(spec);
  }
  for (int i = 0; i < 20; ++i) {
    const std::string name = "other" + std::to_string(i);
    sets[name] = set_of(name, range(next, next + 50));
    next += 50;
  }
  const auto rep = el::random_domain_baseline(sets, domains, {1000, 5, 1});
  ASSERT_EQ(rep.domains.size(), 4u);
  for (const auto& d : rep.domains) {
    EXPECT_NEAR(d.pct_shared, 100.0 * 10.0 / 170.0, 1e-12);
    EXPECT_DOUBLE_EQ(*d.pct_broader, 100.0);
    EXPECT_GE(d.pct_shared, 10.0 * *d.baseline_shared.mean);
    EXPECT_LE(d.p_shared, 0.01);
    EXPECT_LE(*d.p_broader, 0.01);
    EXPECT_EQ(d.baseline_shared.replicates, 1000u);
  }
  EXPECT_NEAR(*rep.mean_pct_shared, 100.0 * 10.0 / 170.0, 1e-12);

  const auto again = el::random_domain_baseline(sets, domains, {1000, 5, 3});
  EXPECT_EQ(el::to_json(rep).dump(), el::to_json(again).dump());
}

TEST(RandomBaseline, NullWorldHasNoExcess) {
  // every concept draws 30 of 200 ids at random; domains are arbitrary labels
  std::map<std::string, el::ExpertSet> sets;
  el::CounterRng rng(3);
  std::vector<std::string> names;
  for (int i = 0; i < 40; ++i) {
    std::vector<std::uint64_t> pool = range(0, 200);
    rng.partial_shuffle(std::span(pool), 30);
    pool.resize(30);
    std::sort(pool.begin(), pool.end());
    names.push_back("c" + std::to_string(100 + i));
    sets[names.back()] = set_of(names.back(), pool);
  }
  std::vector<el::DomainSpec> domains;
  for (int d = 0; d < 8; ++d) {
    domains.push_back({"d" + std::to_string(d),
                       {names[5 * d], names[5 * d + 1], names[5 * d + 2], names[5 * d + 3]},
                       names[5 * d + 4]});
  }
  const auto rep = el::random_domain_baseline(sets, domains, {500, 9, 1});
  double p_sum = 0.0;
  for (const auto& d : rep.domains) p_sum += d.p_shared;
  EXPECT_GT(p_sum / 8.0, 0.2);
  EXPECT_NEAR(*rep.mean_pct_shared, *rep.mean_baseline_shared, 0.5);
}

TEST(RandomBaseline, UndefinedBroaderNeverExceeds) {
  std::map<std::string, el::ExpertSet> sets;
  sets["a"] = set_of("a", {1, 2});
  sets["b"] = set_of("b", {1, 2});
  sets["x"] = set_of("x", {1});
  sets["y"] = set_of("y", {7});
  sets["z"] = set_of("z", {8});
  std::vector<el::DomainSpec> d{{"dom", {"a", "b"}, "x"}};
  const auto rep = el::random_domain_baseline(sets, d, {300, 1, 1});
  const auto& r = rep.domains[0];
  EXPECT_DOUBLE_EQ(*r.pct_broader, 50.0);
  // pseudo-domains drawn from {a,b,y,z}; most have an empty core
  EXPECT_LT(r.baseline_broader.defined, 300u);
  EXPECT_GT(r.baseline_broader.defined, 0u);
  EXPECT_LE(*r.p_broader, 1.0);

  std::vector<el::DomainSpec> missing{{"dom", {"a", "nope"}, "x"}};
  EXPECT_THROW(el::random_domain_baseline(sets, missing, {10, 1, 1}), el::ValidationError);
}

TEST(ConceptGraph, IsolatedNodes) {
  const std::vector<std::string> c{"a", "b", "c"};
  const std::vector<double> zero(9, 0.0);
  const auto g = el::export_concept_graph(c, zero, 0.0);
  EXPECT_EQ(g.nodes.size(), 3u);
  EXPECT_TRUE(g.edges.empty());
}

TEST(ConceptGraph, BlockDiagonalComponents) {
  const std::vector<std::string> c{"a1", "a2", "a3", "b1", "b2", "b3"};
  std::vector<double> sim(36, 0.0);
  auto set = [&](std::size_t i, std::size_t j, double v) { sim[i * 6 + j] = sim[j * 6 + i] = v; };
  for (std::size_t i = 0; i < 6; ++i) sim[i * 6 + i] = 1.0;
  set(0, 1, 0.3), set(0, 2, 0.25), set(1, 2, 0.4);
  set(3, 4, 0.2), set(3, 5, 0.35), set(4, 5, 0.3);
  set(0, 3, 0.05), set(2, 5, 0.1);
  const auto g = el::export_concept_graph(c, sim, 0.11, {{"a1", "A"}, {"b1", "B"}});
  // union-find over edges
  std::vector<std::size_t> parent(6);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  for (const auto& e : g.edges) parent[find(e.a)] = find(e.b);
  EXPECT_EQ(find(0), find(1));
  EXPECT_EQ(find(0), find(2));
  EXPECT_EQ(find(3), find(4));
  EXPECT_EQ(find(3), find(5));
  EXPECT_NE(find(0), find(3));
  EXPECT_EQ(g.edges.size(), 6u);
  EXPECT_EQ(g.domains[0], "A");
  EXPECT_EQ(g.domains[1], "");

  set(0, 1, 0.3);
  sim[1 * 6 + 0] = 0.2;
  EXPECT_THROW(el::export_concept_graph(c, sim, 0.1), el::ValidationError);
}

TEST(ConceptGraph, DotEdgeCountMatchesRecount) {
  const std::size_t n = 50;
  std::vector<std::string> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back("c" + std::to_string(i));
  std::vector<double> sim(n * n, 1.0);
  el::CounterRng rng(12);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = rng.uniform() < 0.7 ? 0.0 : rng.uniform() * 0.5;
      sim[i * n + j] = sim[j * n + i] = v;
      if (v > 0.0 && v >= 0.2) ++expected;
    }
  const auto g = el::export_concept_graph(c, sim, 0.2);
  const auto dot = g.to_dot();
  const std::regex edge("\"c[0-9]+\" -- \"c[0-9]+\" \\[weight=[0-9.e-]+, penwidth=[0-9.e-]+\\];");
  const auto count = static_cast<std::size_t>(std::distance(std::sregex_iterator(dot.begin(), dot.end(), edge), std::sregex_iterator()));
  EXPECT_EQ(count, expected);
  EXPECT_EQ(g.edges.size(), expected);
  EXPECT_EQ(dot.rfind("graph concepts {", 0), 0u);
  EXPECT_EQ(g.to_node_link()["links"].size(), expected);
}

TEST(SynthHierarchy, CoreArithmetic) {
  el::SynthConfig cfg;
  cfg.map = el::NeuronMap::uniform(4, 500, 100);
  cfg.experts_per_concept = 50;
  cfg.pool_size = 120;
  cfg.pos_size = 100;
  cfg.neg_size = 300;
  cfg.n_background = 20;
  cfg.seed = 4;
  for (int d = 0; d < 10; ++d) {
    el::SynthDomain dom{"dom" + std::to_string(d), {}, "broad" + std::to_string(d), 10, 1.0};
    for (int s = 0; s < 4; ++s) dom.specifics.push_back(dom.name + "-s" + std::to_string(s));
    cfg.domains.push_back(dom);
  }
  const auto w = el::generate_synthetic_hierarchy(cfg);
  std::map<std::string, el::ExpertSet> sets;
  for (const auto& c : w.target_concepts()) {
    auto [dump, man] = w.concept_context(c);
    sets[c] = el::extract_experts(el::score_all_neurons(dump, man), 0.5);
  }
  const auto specs = w.domain_specs();
  const auto rep = el::random_domain_baseline(sets, specs, {200, 1, 1});
  // planted: core 10, union 10 + 4 * 40 = 170
  const double planted_pct = 100.0 * 10.0 / 170.0;
  for (const auto& d : rep.domains) {
    EXPECT_NEAR(d.pct_shared, planted_pct, 1.0);
    EXPECT_NEAR(*d.pct_broader, 100.0, 1e-9);
    EXPECT_EQ(d.core, w.planted_core(d.domain));
  }

  cfg.domains.resize(1);
  cfg.domains[0].core_size = 0;
  const auto w0 = el::generate_synthetic_hierarchy(cfg);
  std::vector<el::ExpertSet> spec_sets;
  for (const auto& c : cfg.domains[0].specifics) {
    auto [dump, man] = w0.concept_context(c);
    spec_sets.push_back(el::extract_experts(el::score_all_neurons(dump, man), 0.5));
  }
  const auto core = el::shared_core(spec_sets);
  EXPECT_TRUE(core.ids.empty());
  EXPECT_EQ(core.pct_shared, 0.0);

  cfg.domains.clear();
  EXPECT_THROW(el::generate_synthetic_hierarchy(cfg), el::ValidationError);
}
