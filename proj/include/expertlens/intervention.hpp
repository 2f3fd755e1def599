#pragma once

// Intervention plans (top-k experts clamped to their positive-set mean) and
// the analysis of generations produced with and without a plan.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "expertlens/activation_dump.hpp"
#include "expertlens/average_precision.hpp"
#include "expertlens/corpus.hpp"
#include "expertlens/error.hpp"
#include "expertlens/expert_sets.hpp"
#include "expertlens/stats.hpp"
#include "json.hpp"

namespace expertlens {

struct PlanEntry {
  NeuronId neuron;
  double value = 0.0;  // mean pooled activation over the positive set
  float ap = 0.0f;
};

struct InterventionPlan {
  std::string concept_name;
  std::string model;
  std::string checkpoint;
  std::size_t k = 0;
  std::uint64_t map_hash = 0;
  std::size_t n_neurons = 0;
  std::vector<PlanEntry> entries;  // rank order: AP desc, flat index asc
};

inline InterventionPlan build_intervention_plan(const APVector& ap, const ActivationDump& dump,
                                                const ConceptManifest& manifest, std::size_t k = 500) {
  if (k < 1) throw ValidationError("intervention plan needs k >= 1");
  if (ap.concept_name != manifest.concept_name) {
    throw ValidationError("AP vector is for '" + ap.concept_name + "' but manifest is for '" + manifest.concept_name + "'");
  }
  if (!(ap.map == dump.map) || ap.size() != dump.n_neurons()) {
    throw ValidationError("AP vector and dump disagree on the neuron map");
  }
  if (!ap.checkpoint.empty() && !dump.checkpoint.empty() && ap.checkpoint != dump.checkpoint) {
    throw ValidationError("AP vector from checkpoint '" + ap.checkpoint + "' applied to dump '" + dump.checkpoint + "'");
  }
  const auto positives = manifest.ids(Label::kPositive);
  if (positives.empty()) throw ValidationError("manifest '" + manifest.concept_name + "' has no positives");
  const auto index = dump.row_index();
  std::vector<std::size_t> rows;
  for (auto id : positives) {
    const auto it = index.find(id);
    if (it == index.end()) throw ValidationError("positive sentence " + hex_id(id) + " missing from dump");
    rows.push_back(it->second);
  }
  InterventionPlan plan;
  plan.concept_name = ap.concept_name;
  plan.model = ap.model;
  plan.checkpoint = ap.checkpoint;
  plan.k = k;
  plan.map_hash = ap.map.hash();
  plan.n_neurons = ap.size();
  for (auto flat : top_k_ranking(ap.scores, k)) {
    double sum = 0.0;
    for (auto r : rows) sum += static_cast<double>(dump.at(r, flat));
    const double v = sum / static_cast<double>(rows.size());
    if (!std::isfinite(v)) throw AnalysisError("non-finite target for neuron " + std::to_string(flat));
    plan.entries.push_back({ap.map.neuron(flat), v, ap.scores[flat]});
  }
  return plan;
}

inline nlohmann::ordered_json to_json(const InterventionPlan& p) {
  nlohmann::ordered_json j;
  j["concept"] = p.concept_name;
  j["model"] = p.model;
  j["checkpoint"] = p.checkpoint;
  j["k"] = p.k;
  j["n_neurons"] = p.n_neurons;
  j["map_hash"] = hex_id(p.map_hash);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : p.entries) {
    arr.push_back({{"layer", e.neuron.layer},
                   {"sublayer", to_string(e.neuron.sublayer)},
                   {"unit", e.neuron.unit},
                   {"flat", e.neuron.flat},
                   {"value", e.value},
                   {"ap", e.ap}});
  }
  j["entries"] = std::move(arr);
  return j;
}

inline InterventionPlan plan_from_json(const nlohmann::json& j, const NeuronMap& map) {
  InterventionPlan p;
  p.concept_name = j.at("concept").get<std::string>();
  p.model = j.value("model", "");
  p.checkpoint = j.value("checkpoint", "");
  p.k = j.at("k").get<std::size_t>();
  p.map_hash = parse_hex_id(j.at("map_hash").get<std::string>());
  if (p.map_hash != map.hash()) throw ValidationError("plan neuron-map hash does not match the model");
  p.n_neurons = map.size();
  for (const auto& e : j.at("entries")) {
    const auto layer = e.at("layer").get<std::uint16_t>();
    const auto sub = parse_sublayer(e.at("sublayer").get<std::string>());
    const auto unit = e.at("unit").get<std::uint32_t>();
    p.entries.push_back({map.neuron(map.flat_index(layer, sub, unit)), e.at("value").get<double>(),
                         e.value("ap", 0.0f)});
  }
  return p;
}

/// Candidates that never occur in any positive document, in input order.
inline std::vector<std::string> filter_word_list(std::span<const std::string> candidates,
                                                 std::span<const std::vector<std::string>> positive_docs) {
  if (candidates.empty()) throw ValidationError("empty candidate word list");
  std::unordered_set<std::string> seen;
  for (const auto& doc : positive_docs) seen.insert(doc.begin(), doc.end());
  std::vector<std::string> out;
  for (const auto& w : candidates)
    if (!seen.count(w)) out.push_back(w);
  if (out.empty()) throw AnalysisError("every candidate word already occurs in the positive set");
  return out;
}

struct PrevalenceReport {
  std::string concept_name;
  double baseline = 0.0;    // mean per-generation prevalence, percent
  double intervened = 0.0;
  double delta = 0.0;       // percentage points
  double p_value = 1.0;
  std::size_t word_list_size = 0;
  std::size_t n_baseline = 0;
  std::size_t n_intervened = 0;
};

/// 100 * (tokens in `words`) / (total tokens) per generation.
inline std::vector<double> prevalence(std::span<const std::vector<std::string>> generations,
                                      const std::unordered_set<std::string>& words) {
  std::vector<double> out;
  out.reserve(generations.size());
  for (std::size_t g = 0; g < generations.size(); ++g) {
    const auto& toks = generations[g];
    if (toks.empty()) throw ValidationError("generation " + std::to_string(g) + " has no tokens");
    std::size_t hits = 0;
    for (const auto& t : toks) hits += words.count(t);
    out.push_back(100.0 * static_cast<double>(hits) / static_cast<double>(toks.size()));
  }
  return out;
}

inline PrevalenceReport prevalence_delta(std::span<const std::vector<std::string>> baseline,
                                         std::span<const std::vector<std::string>> intervened,
                                         std::span<const std::string> words, const PermutationOptions& opts) {
  if (baseline.empty() || intervened.empty()) throw ValidationError("both generation arms must be nonempty");
  if (words.empty()) throw ValidationError("empty word list");
  const std::unordered_set<std::string> set(words.begin(), words.end());
  const auto pb = prevalence(baseline, set);
  const auto pi = prevalence(intervened, set);
  PrevalenceReport r;
  r.baseline = mean(pb);
  r.intervened = mean(pi);
  r.delta = r.intervened - r.baseline;
  r.p_value = permutation_test(pi, pb, opts).p_value;
  r.word_list_size = set.size();
  r.n_baseline = pb.size();
  r.n_intervened = pi.size();
  return r;
}

inline nlohmann::ordered_json to_json(const PrevalenceReport& r) {
  nlohmann::ordered_json j;
  j["concept"] = r.concept_name;
  j["baseline_pct"] = r.baseline;
  j["intervened_pct"] = r.intervened;
  j["delta_pp"] = r.delta;
  j["p_value"] = r.p_value;
  j["word_list_size"] = r.word_list_size;
  j["n_baseline"] = r.n_baseline;
  j["n_intervened"] = r.n_intervened;
  return j;
}

/// One generation per line, whitespace-separated tokens. Blank lines are
/// dropped; with `raw_text` each line goes through basic_tokenize instead.
inline std::vector<std::vector<std::string>> read_generations(const std::filesystem::path& path, bool raw_text = false) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) {
    auto toks = raw_text ? basic_tokenize(line) : split_tokens(line);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

/// One lemma per line.
inline std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) {
    const auto toks = split_tokens(line);
    if (!toks.empty()) out.push_back(toks[0]);
  }
  return out;
}

}  // namespace expertlens
