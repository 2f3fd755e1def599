#pragma once

// How stable expert sets are when the positive and negative sentence samples
// change: K resampled folds per concept_name, overlap within a concept_name across
// folds versus overlap between different concepts at matched folds.

#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "expertlens/activation_dump.hpp"
#include "expertlens/average_precision.hpp"
#include "expertlens/corpus.hpp"
#include "expertlens/error.hpp"
#include "expertlens/expert_sets.hpp"
#include "expertlens/parallel.hpp"
#include "expertlens/similarity.hpp"
#include "expertlens/stats.hpp"
#include "json.hpp"

namespace expertlens {

struct FoldConfig {
  std::vector<std::size_t> pos_sizes{400};
  std::vector<std::size_t> neg_sizes{1000};
  std::size_t folds = 8;
  std::vector<double> taus{0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t cross_pairs = 50;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  BootstrapOptions bootstrap{1000, 0.95, 0, 1};
};

struct StabilityRow {
  std::size_t pos_size = 0;
  std::size_t neg_size = 0;
  double tau = 0.0;
  std::size_t folds = 0;
  std::size_t n_concepts = 0;
  std::size_t n_cross_pairs = 0;
  double within = 0.0;
  ConfidenceInterval within_ci;
  double cross = 0.0;
  ConfidenceInterval cross_ci;
};

struct ConceptStability {
  std::size_t pos_size = 0;
  std::size_t neg_size = 0;
  double tau = 0.0;
  std::string concept_name;
  double within = 0.0;
  double mean_size = 0.0;
};

struct StabilityReport {
  std::vector<StabilityRow> rows;
  std::vector<ConceptStability> per_concept;
};

namespace detail {
inline ConfidenceInterval ci_or_point(std::span<const double> xs, const BootstrapOptions& opts) {
  if (xs.size() >= 2) return bootstrap_mean_ci(xs, opts);
  const double v = xs.empty() ? 0.0 : xs[0];
  return {v, v, opts.level, 0, 0, true};
}
}  // namespace detail

/// `targets` are the concepts studied; `pools` holds every concept_name manifest
/// (targets and others). Fold f of configuration (P, N) samples P positives
/// from the target's pool and N negatives from the other concepts' pools
/// with a seed derived from (seed, P, N, f). Cross-concept_name overlap compares
/// different concepts at the same fold index.
inline StabilityReport fold_stability(const ActivationDump& dump, std::span<const ConceptManifest> pools,
                                      std::span<const std::string> targets, const FoldConfig& cfg) {
  if (cfg.folds < 2) throw ValidationError("fold stability needs K >= 2");
  if (targets.empty()) throw ValidationError("fold stability needs at least one concept");
  for (double t : cfg.taus)
    if (!(t > 0.0 && t < 1.0)) throw ValidationError("tau grid must lie in (0,1)");
  std::map<std::string, const ConceptManifest*> by_name;
  for (const auto& m : pools) by_name[m.concept_name] = &m;
  for (const auto& t : targets)
    if (!by_name.count(t)) throw ValidationError("no manifest for concept '" + t + "'");

  StabilityReport rep;
  const std::size_t n_c = targets.size(), K = cfg.folds, n_t = cfg.taus.size();
  for (auto pos : cfg.pos_sizes) {
    for (auto neg : cfg.neg_sizes) {
      // sets[(c * K + f) * n_t + t]
      std::vector<std::vector<std::uint64_t>> sets(n_c * K * n_t);
      parallel_for(n_c * K, cfg.threads, [&](std::size_t task) {
        const std::size_t c = task / K, f = task % K;
        const auto fold_seed = derive_key(cfg.seed, pos, neg, f);
        const ConceptManifest& target = *by_name.at(targets[c]);
        if (target.count(Label::kPositive) < pos) {
          throw ValidationError("positive pool of '" + target.concept_name + "' exhausted: " +
                                std::to_string(target.count(Label::kPositive)) + " < " + std::to_string(pos));
        }
        const auto m = make_scoring_manifest(target, pools, pos, neg, fold_seed);
        const auto ap = score_all_neurons(dump, m, {1, 256});
        for (std::size_t t = 0; t < n_t; ++t) sets[(c * K + f) * n_t + t] = extract_experts(ap, cfg.taus[t]).ids;
      });

      // cross-concept_name pairs: all pairs if few, else a seeded sample
      std::vector<std::pair<std::size_t, std::size_t>> pairs;
      for (std::size_t a = 0; a < n_c; ++a)
        for (std::size_t b = a + 1; b < n_c; ++b) pairs.emplace_back(a, b);
      if (pairs.size() > cfg.cross_pairs) {
        CounterRng rng(derive_key(cfg.seed, "cross-pairs", pos, neg));
        rng.partial_shuffle(std::span(pairs), cfg.cross_pairs);
        pairs.resize(cfg.cross_pairs);
      }

      for (std::size_t t = 0; t < n_t; ++t) {
        auto at = [&](std::size_t c, std::size_t f) -> const std::vector<std::uint64_t>& {
          return sets[(c * K + f) * n_t + t];
        };
        std::vector<double> within(n_c), cross;
        for (std::size_t c = 0; c < n_c; ++c) {
          double s = 0.0, sz = 0.0;
          std::size_t n = 0;
          for (std::size_t f = 0; f < K; ++f) {
            sz += static_cast<double>(at(c, f).size());
            for (std::size_t g = f + 1; g < K; ++g, ++n) s += jaccard(at(c, f), at(c, g));
          }
          within[c] = s / static_cast<double>(n);
          rep.per_concept.push_back({pos, neg, cfg.taus[t], targets[c], within[c], sz / static_cast<double>(K)});
        }
        for (const auto& [a, b] : pairs) {
          double s = 0.0;
          for (std::size_t f = 0; f < K; ++f) s += jaccard(at(a, f), at(b, f));
          cross.push_back(s / static_cast<double>(K));
        }
        StabilityRow row;
        row.pos_size = pos;
        row.neg_size = neg;
        row.tau = cfg.taus[t];
        row.folds = K;
        row.n_concepts = n_c;
        row.n_cross_pairs = cross.size();
        row.within = mean(within);
        BootstrapOptions b = cfg.bootstrap;
        b.seed = derive_key(cfg.seed, "fold-ci", pos, neg, t);
        row.within_ci = detail::ci_or_point(within, b);
        if (!cross.empty()) {
          row.cross = mean(cross);
          row.cross_ci = detail::ci_or_point(cross, b);
        }
        rep.rows.push_back(row);
      }
    }
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const StabilityReport& r) {
  nlohmann::ordered_json j;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"pos_size", row.pos_size},
                    {"neg_size", row.neg_size},
                    {"tau", row.tau},
                    {"folds", row.folds},
                    {"n_concepts", row.n_concepts},
                    {"n_cross_pairs", row.n_cross_pairs},
                    {"within", row.within},
                    {"within_ci", to_json(row.within_ci)},
                    {"cross", row.cross},
                    {"cross_ci", to_json(row.cross_ci)}});
  }
  auto per = nlohmann::ordered_json::array();
  for (const auto& c : r.per_concept) {
    per.push_back({{"pos_size", c.pos_size},
                   {"neg_size", c.neg_size},
                   {"tau", c.tau},
                   {"concept", c.concept_name},
                   {"within", c.within},
                   {"mean_size", c.mean_size}});
  }
  j["rows"] = std::move(rows);
  j["per_concept"] = std::move(per);
  return j;
}

inline std::string stability_csv(const StabilityReport& r) {
  std::ostringstream out;
  out.precision(10);
  out << "pos_size,neg_size,tau,folds,within,within_lo,within_hi,cross,cross_lo,cross_hi,n_concepts,n_cross_pairs\n";
  for (const auto& row : r.rows) {
    out << row.pos_size << ',' << row.neg_size << ',' << row.tau << ',' << row.folds << ',' << row.within << ','
        << row.within_ci.lower << ',' << row.within_ci.upper << ',' << row.cross << ',' << row.cross_ci.lower << ','
        << row.cross_ci.upper << ',' << row.n_concepts << ',' << row.n_cross_pairs << '\n';
  }
  return out.str();
}

}  // namespace expertlens
