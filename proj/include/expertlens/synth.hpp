#pragma once

// Seeded synthetic worlds with planted experts.
//
// Every sentence belongs to one concept_name. Its activation on neuron n at
// checkpoint t is  N(0,1) + shift * [n planted for that concept_name at t],  where
// the N(0,1) draw is a pure function of (seed, t, sentence, n) on a counter
// stream. Any subset of rows can therefore be materialized on demand, and
// identical configs give bit-identical dumps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "expertlens/activation_dump.hpp"
#include "expertlens/corpus.hpp"
#include "expertlens/domains.hpp"
#include "expertlens/error.hpp"
#include "expertlens/parallel.hpp"
#include "expertlens/rng.hpp"
#include "json.hpp"

namespace expertlens {

struct PlantedSharing {
  std::string from;  // concept_name whose experts are reused
  std::string to;    // concept_name receiving round(fraction * experts) of them
  double fraction = 0.0;
};

struct SynthDomain {
  std::string name;
  std::vector<std::string> specifics;
  std::string broader;
  std::size_t core_size = 0;
  double broader_core_fraction = 1.0;  // share of the core planted in the broader concept_name
};

struct SynthConfig {
  std::string model = "synthetic";
  NeuronMap map = NeuronMap::uniform(4, 192, 64);
  std::vector<std::string> concepts;   // target concepts, in assignment order
  std::size_t experts_per_concept = 50;
  double shift = 4.0;
  std::vector<PlantedSharing> sharing;
  std::vector<SynthDomain> domains;    // their concepts are planted before `concepts`
  std::size_t pool_size = 400;         // sentences per target concept_name
  std::size_t n_background = 0;        // extra concepts with no experts
  std::size_t background_pool_size = 100;
  std::size_t pos_size = 400;
  std::size_t neg_size = 1000;
  std::vector<std::string> checkpoints{"final"};
  double drift = 0.0;                  // fraction of each set replaced per checkpoint step
  Pooling pooling = Pooling::kMax;
  std::uint64_t seed = 0;

  std::size_t n_neurons() const { return static_cast<std::size_t>(map.size()); }

  void validate() const {
    if (n_neurons() == 0) throw ValidationError("synthetic world needs neurons");
    if (experts_per_concept > n_neurons()) throw ValidationError("experts_per_concept exceeds n_neurons");
    if (shift < 0.0) throw ValidationError("shift must be nonnegative");
    if (!(drift >= 0.0 && drift <= 1.0)) throw ValidationError("drift must be in [0,1]");
    if (checkpoints.empty()) throw ValidationError("at least one checkpoint label required");
    for (const auto& s : sharing)
      if (!(s.fraction >= 0.0 && s.fraction <= 1.0)) throw ValidationError("sharing fraction outside [0,1]");
    for (const auto& d : domains) {
      if (d.core_size > experts_per_concept) throw ValidationError("core_size exceeds experts_per_concept");
      if (!(d.broader_core_fraction >= 0.0 && d.broader_core_fraction <= 1.0)) {
        throw ValidationError("broader_core_fraction outside [0,1]");
      }
    }
    if (pos_size > pool_size) throw ValidationError("pos_size exceeds pool_size");
  }
};

class SynthWorld {
 public:
  explicit SynthWorld(SynthConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    plant();
    build_sentences();
  }

  const SynthConfig& config() const noexcept { return cfg_; }

  /// Target concepts (domain concepts first, then `concepts`), then background.
  const std::vector<std::string>& all_concepts() const noexcept { return names_; }
  std::span<const std::string> target_concepts() const { return {names_.data(), n_targets_}; }
  const std::vector<ConceptManifest>& manifests() const noexcept { return manifests_; }
  const ConceptManifest& manifest(const std::string& concept_name) const { return manifests_.at(index_of(concept_name)); }

  std::vector<DomainSpec> domain_specs() const {
    std::vector<DomainSpec> out;
    for (const auto& d : cfg_.domains) out.push_back({d.name, d.specifics, d.broader});
    return out;
  }

  /// Planted expert IDs (sorted) of `concept_name` at checkpoint index `cp`.
  const std::vector<std::uint64_t>& planted(const std::string& concept_name, std::size_t cp = 0) const {
    return planted_.at(cp).at(index_of(concept_name));
  }

  /// Planted core of a domain (before any drift).
  const std::vector<std::uint64_t>& planted_core(const std::string& domain) const { return cores_.at(domain); }

  std::size_t n_sentences() const noexcept { return owner_.size(); }

  /// Materializes the listed sentences (by row of the world) at checkpoint `cp`.
  ActivationDump dump_rows(std::span<const std::size_t> rows, std::size_t cp, unsigned threads = 1) const {
    ActivationDump d;
    d.model = cfg_.model;
    d.checkpoint = cfg_.checkpoints.at(cp);
    d.pooling = cfg_.pooling;
    d.map = cfg_.map;
    const std::size_t n = cfg_.n_neurons();
    d.values.resize(rows.size() * n);
    for (auto r : rows) d.sentence_ids.push_back(ids_.at(r));
    const std::uint64_t key = derive_key(cfg_.seed, "activations", cp);
    parallel_for(
        rows.size(), threads,
        [&](std::size_t i) {
          const std::size_t r = rows[i];
          float* out = d.values.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<float>(counter_normal(key, r * n + j));
          const auto c = owner_[r];
          if (c < n_targets_) {
            for (auto id : planted_[cp][c]) out[id] = static_cast<float>(static_cast<double>(out[id]) + cfg_.shift);
          }
        },
        16);
    return d;
  }

  /// Every sentence of the world at checkpoint `cp`.
  ActivationDump full_dump(std::size_t cp = 0, unsigned threads = 1) const {
    std::vector<std::size_t> rows(n_sentences());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return dump_rows(rows, cp, threads);
  }

  /// Scoring manifest (pos_size positives, neg_size negatives from the other
  /// concepts) and a dump holding exactly those sentences.
  std::pair<ActivationDump, ConceptManifest> concept_context(const std::string& concept_name, std::size_t cp = 0,
                                                             unsigned threads = 1) const {
    auto m = make_scoring_manifest(manifest(concept_name), manifests_, cfg_.pos_size, cfg_.neg_size,
                                   derive_key(cfg_.seed, "scoring"));
    std::vector<std::size_t> rows;
    for (const auto& e : m.entries) rows.push_back(row_of_.at(e.id));
    return {dump_rows(rows, cp, threads), std::move(m)};
  }

  nlohmann::ordered_json ground_truth() const {
    nlohmann::ordered_json j;
    j["seed"] = cfg_.seed;
    j["shift"] = cfg_.shift;
    j["experts_per_concept"] = cfg_.experts_per_concept;
    auto cps = nlohmann::ordered_json::array();
    for (std::size_t cp = 0; cp < cfg_.checkpoints.size(); ++cp) {
      nlohmann::ordered_json jc;
      jc["checkpoint"] = cfg_.checkpoints[cp];
      nlohmann::ordered_json planted = nlohmann::ordered_json::object();
      for (std::size_t c = 0; c < n_targets_; ++c) planted[names_[c]] = planted_[cp][c];
      jc["planted"] = std::move(planted);
      cps.push_back(std::move(jc));
    }
    j["checkpoints"] = std::move(cps);
    auto doms = nlohmann::ordered_json::array();
    for (const auto& d : cfg_.domains) {
      auto jd = to_json(DomainSpec{d.name, d.specifics, d.broader});
      jd["core"] = cores_.at(d.name);
      doms.push_back(std::move(jd));
    }
    j["domains"] = std::move(doms);
    return j;
  }

 private:
  std::size_t index_of(const std::string& concept_name) const {
    const auto it = index_.find(concept_name);
    if (it == index_.end()) throw ValidationError("unknown synthetic concept '" + concept_name + "'");
    return it->second;
  }

  void add_name(const std::string& n) {
    if (!index_.emplace(n, names_.size()).second) throw ValidationError("concept '" + n + "' defined twice");
    names_.push_back(n);
  }

  void plant() {
    for (const auto& d : cfg_.domains) {
      for (const auto& c : d.specifics) add_name(c);
      add_name(d.broader);
    }
    for (const auto& c : cfg_.concepts) add_name(c);
    n_targets_ = names_.size();

    // fresh neurons come from one seeded permutation so planted sets never
    // collide unless sharing asks for it
    std::vector<std::uint64_t> perm(cfg_.n_neurons());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    CounterRng rng(derive_key(cfg_.seed, "plant"));
    rng.shuffle(std::span(perm));
    std::size_t next = 0;
    auto fresh = [&](std::size_t count) {
      if (next + count > perm.size()) {
        throw ValidationError("synthetic world needs more neurons than the map holds (" + std::to_string(perm.size()) +
                              ")");
      }
      std::vector<std::uint64_t> out(perm.begin() + static_cast<std::ptrdiff_t>(next),
                                     perm.begin() + static_cast<std::ptrdiff_t>(next + count));
      next += count;
      return out;
    };
    const std::size_t k = cfg_.experts_per_concept;
    std::vector<std::vector<std::uint64_t>> base(n_targets_);  // in planting order (unsorted)
    std::vector<bool> assigned(n_targets_, false);
    for (const auto& d : cfg_.domains) {
      const auto core = fresh(d.core_size);
      auto sorted_core = core;
      std::sort(sorted_core.begin(), sorted_core.end());
      cores_[d.name] = sorted_core;
      for (const auto& c : d.specifics) {
        auto s = core;
        const auto priv = fresh(k - d.core_size);
        s.insert(s.end(), priv.begin(), priv.end());
        base[index_of(c)] = std::move(s);
        assigned[index_of(c)] = true;
      }
      const auto keep = static_cast<std::size_t>(std::llround(d.broader_core_fraction * static_cast<double>(d.core_size)));
      std::vector<std::uint64_t> s(core.begin(), core.begin() + static_cast<std::ptrdiff_t>(keep));
      const auto priv = fresh(k - keep);
      s.insert(s.end(), priv.begin(), priv.end());
      base[index_of(d.broader)] = std::move(s);
      assigned[index_of(d.broader)] = true;
    }
    for (const auto& c : cfg_.concepts) {
      const std::size_t ci = index_of(c);
      const PlantedSharing* share = nullptr;
      for (const auto& s : cfg_.sharing)
        if (s.to == c) share = &s;
      std::vector<std::uint64_t> s;
      if (share) {
        const std::size_t from = index_of(share->from);
        if (!assigned[from]) throw ValidationError("sharing source '" + share->from + "' must be planted before '" + c + "'");
        const auto n_shared = static_cast<std::size_t>(std::llround(share->fraction * static_cast<double>(k)));
        s.assign(base[from].begin(), base[from].begin() + static_cast<std::ptrdiff_t>(std::min(n_shared, base[from].size())));
      }
      const auto priv = fresh(k - s.size());
      s.insert(s.end(), priv.begin(), priv.end());
      base[ci] = std::move(s);
      assigned[ci] = true;
    }

    // checkpoint drift: replace round(drift * size) members per step
    planted_.resize(cfg_.checkpoints.size());
    auto current = base;
    for (std::size_t cp = 0; cp < cfg_.checkpoints.size(); ++cp) {
      if (cp > 0 && cfg_.drift > 0.0) {
        for (std::size_t c = 0; c < n_targets_; ++c) {
          auto& s = current[c];
          const auto r = static_cast<std::size_t>(std::llround(cfg_.drift * static_cast<double>(s.size())));
          CounterRng drng(derive_key(cfg_.seed, "drift", cp, c));
          drng.partial_shuffle(std::span(s), r);
          const auto repl = fresh(r);
          std::copy(repl.begin(), repl.end(), s.begin());
        }
      }
      planted_[cp].resize(n_targets_);
      for (std::size_t c = 0; c < n_targets_; ++c) {
        auto s = current[c];
        std::sort(s.begin(), s.end());
        planted_[cp][c] = std::move(s);
      }
    }
  }

  void build_sentences() {
    for (std::size_t b = 0; b < cfg_.n_background; ++b) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "background-%04zu", b);
      add_name(buf);
    }
    for (std::size_t c = 0; c < names_.size(); ++c) {
      ConceptManifest m;
      m.concept_name = names_[c];
      m.generator = "synthetic";
      const std::size_t pool = c < n_targets_ ? cfg_.pool_size : cfg_.background_pool_size;
      for (std::size_t i = 0; i < pool; ++i) {
        const std::string text = "synthetic sentence " + std::to_string(i) + " about " + names_[c] + ".";
        const auto id = sentence_id(text);
        if (!row_of_.emplace(id, owner_.size()).second) throw ValidationError("synthetic sentence id collision");
        owner_.push_back(c);
        ids_.push_back(id);
        m.entries.push_back({id, Label::kPositive, fnv1a(text), i % 2 == 0 ? PromptType::kFact : PromptType::kStory});
      }
      manifests_.push_back(std::move(m));
    }
  }

  SynthConfig cfg_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
  std::size_t n_targets_ = 0;
  std::vector<std::vector<std::vector<std::uint64_t>>> planted_;  // [cp][concept_name]
  std::map<std::string, std::vector<std::uint64_t>> cores_;
  std::vector<ConceptManifest> manifests_;
  std::vector<std::size_t> owner_;          // row -> concept_name index
  std::vector<std::uint64_t> ids_;          // row -> sentence id
  std::unordered_map<std::uint64_t, std::size_t> row_of_;
};

/// Flat world of independent (or pairwise-sharing) concepts.
inline SynthWorld generate_synthetic_concepts(SynthConfig cfg) { return SynthWorld(std::move(cfg)); }

/// World organised in domains with shared cores; requires cfg.domains.
inline SynthWorld generate_synthetic_hierarchy(SynthConfig cfg) {
  if (cfg.domains.empty()) throw ValidationError("hierarchy world needs at least one domain");
  return SynthWorld(std::move(cfg));
}

}  // namespace expertlens
