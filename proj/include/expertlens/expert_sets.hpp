#pragma once

// Expert-set extraction and set algebra.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "expertlens/average_precision.hpp"
#include "expertlens/error.hpp"
#include "expertlens/stats.hpp"
#include "json.hpp"

namespace expertlens {

struct SelectionRule {
  enum class Kind : std::uint8_t { kThreshold, kTopK } kind = Kind::kThreshold;
  double tau = 0.5;
  std::size_t k = 0;

  static SelectionRule threshold(double tau) { return {Kind::kThreshold, tau, 0}; }
  static SelectionRule top_k(std::size_t k) { return {Kind::kTopK, 0.0, k}; }

  friend bool operator==(const SelectionRule&, const SelectionRule&) = default;
};

struct ExpertSet {
  std::string concept_name;
  std::string model;
  std::string checkpoint;
  SelectionRule rule;
  std::uint64_t map_hash = 0;
  std::vector<std::uint64_t> ids;  // strictly increasing flat indices

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  bool contains(std::uint64_t id) const { return std::binary_search(ids.begin(), ids.end(), id); }
};

/// All neurons with AP >= tau (inclusive boundary). Compared at the stored
/// f32 precision so an AP equal to tau survives the round trip.
inline ExpertSet extract_experts(const APVector& ap, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must lie in (0,1), got " + std::to_string(tau));
  ExpertSet s{ap.concept_name, ap.model, ap.checkpoint, SelectionRule::threshold(tau), ap.map.hash(), {}};
  const float t = static_cast<float>(tau);
  for (std::size_t i = 0; i < ap.scores.size(); ++i) {
    if (ap.scores[i] >= t) s.ids.push_back(i);
  }
  return s;
}

/// Indices of the k highest AP scores, ordered by (AP desc, index asc).
inline std::vector<std::uint64_t> top_k_ranking(std::span<const float> scores, std::size_t k) {
  std::vector<std::uint64_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  k = std::min(k, idx.size());
  auto better = [&](std::uint64_t a, std::uint64_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

/// The k best neurons by AP; k above the neuron count clamps with a warning.
inline ExpertSet top_k_experts(const APVector& ap, std::size_t k) {
  if (k < 1) throw ValidationError("top-k needs k >= 1");
  if (k > ap.scores.size()) {
    std::cerr << "warning: top-k " << k << " exceeds " << ap.scores.size() << " neurons; clamping\n";
  }
  ExpertSet s{ap.concept_name, ap.model, ap.checkpoint, SelectionRule::top_k(k), ap.map.hash(), {}};
  s.ids = top_k_ranking(ap.scores, k);
  std::sort(s.ids.begin(), s.ids.end());
  return s;
}

inline std::size_t intersection_size(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  std::size_t i = 0, j = 0, n = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++n, ++i, ++j;
    }
  }
  return n;
}

inline std::vector<std::uint64_t> set_intersection(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  std::vector<std::uint64_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<std::uint64_t> set_union(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  std::vector<std::uint64_t> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

/// |a ∩ b| / |a ∪ b| on sorted ID lists; two empty sets score 0.
inline double jaccard(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  const std::size_t inter = intersection_size(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double jaccard(const ExpertSet& a, const ExpertSet& b) {
  if (a.map_hash != b.map_hash) {
    throw ValidationError("jaccard over different neuron maps ('" + a.concept_name + "' vs '" + b.concept_name + "')");
  }
  return jaccard(std::span<const std::uint64_t>(a.ids), std::span<const std::uint64_t>(b.ids));
}

struct CheckpointStep {
  std::string from;
  std::string to;
  double jaccard = 0.0;
};

/// Jaccard between each pair of consecutive checkpoints, in the given order.
inline std::vector<CheckpointStep> checkpoint_overlap(std::span<const ExpertSet> sets) {
  if (sets.size() < 2) throw ValidationError("checkpoint overlap needs at least 2 checkpoints");
  for (const auto& s : sets) {
    if (s.concept_name != sets[0].concept_name) throw ValidationError("checkpoint overlap mixes concepts");
    if (!(s.rule == sets[0].rule)) throw ValidationError("checkpoint overlap mixes selection rules");
  }
  std::vector<CheckpointStep> out;
  for (std::size_t i = 0; i + 1 < sets.size(); ++i) {
    out.push_back({sets[i].checkpoint, sets[i + 1].checkpoint, jaccard(sets[i], sets[i + 1])});
  }
  return out;
}

struct SetSizeGroup {
  std::string model;
  std::string checkpoint;
  double tau = 0.0;
  std::size_t n_sets = 0;
  std::size_t n_empty = 0;                    // excluded from the log means
  std::optional<double> mean_log10_size;      // null when every set is empty
  std::optional<ConfidenceInterval> log_ci;
  std::optional<double> mean_log10_scaled;    // log10(size / n_neurons)
  std::optional<ConfidenceInterval> scaled_ci;
  double mean_size = 0.0;
  double mean_scaled_size = 0.0;
};

/// Per-(model, checkpoint, tau) set-size aggregates. Threshold sets only.
inline std::vector<SetSizeGroup> set_size_stats(std::span<const ExpertSet> sets,
                                                const std::map<std::string, std::uint64_t>& neuron_counts,
                                                const BootstrapOptions& boot) {
  std::map<std::tuple<std::string, std::string, double>, std::vector<const ExpertSet*>> groups;
  for (const auto& s : sets) {
    if (s.rule.kind != SelectionRule::Kind::kThreshold) continue;
    groups[{s.model, s.checkpoint, s.rule.tau}].push_back(&s);
  }
  std::vector<SetSizeGroup> out;
  for (const auto& [key, members] : groups) {
    SetSizeGroup g;
    std::tie(g.model, g.checkpoint, g.tau) = key;
    const auto nc = neuron_counts.find(g.model);
    if (nc == neuron_counts.end() || nc->second == 0) {
      throw ValidationError("no neuron count for model '" + g.model + "'");
    }
    const double n_neurons = static_cast<double>(nc->second);
    g.n_sets = members.size();
    std::vector<double> logs, scaled_logs;
    double size_sum = 0.0;
    for (const auto* s : members) {
      const double sz = static_cast<double>(s->size());
      size_sum += sz;
      if (s->empty()) {
        ++g.n_empty;
        continue;
      }
      logs.push_back(std::log10(sz));
      scaled_logs.push_back(std::log10(sz / n_neurons));
    }
    g.mean_size = size_sum / static_cast<double>(members.size());
    g.mean_scaled_size = g.mean_size / n_neurons;
    if (!logs.empty()) {
      g.mean_log10_size = mean(logs);
      g.mean_log10_scaled = mean(scaled_logs);
      if (logs.size() >= 2) {
        BootstrapOptions b = boot;
        b.seed = derive_key(boot.seed, g.model + "/" + g.checkpoint + "/" + std::to_string(g.tau));
        g.log_ci = bootstrap_mean_ci(logs, b);
        g.scaled_ci = bootstrap_mean_ci(scaled_logs, b);
      } else {
        g.log_ci = ConfidenceInterval{logs[0], logs[0], boot.level, 0, 0, true};
        g.scaled_ci = ConfidenceInterval{scaled_logs[0], scaled_logs[0], boot.level, 0, 0, true};
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

// --- persistence ----------------------------------------------------------------

inline nlohmann::ordered_json to_json(const SelectionRule& r) {
  nlohmann::ordered_json j;
  if (r.kind == SelectionRule::Kind::kThreshold) {
    j["kind"] = "THRESHOLD";
    j["tau"] = r.tau;
  } else {
    j["kind"] = "TOP_K";
    j["k"] = r.k;
  }
  return j;
}

inline nlohmann::ordered_json to_json(const ExpertSet& s) {
  nlohmann::ordered_json j;
  j["concept"] = s.concept_name;
  j["model"] = s.model;
  j["checkpoint"] = s.checkpoint;
  j["rule"] = to_json(s.rule);
  j["map_hash"] = hex_id(s.map_hash);
  j["ids"] = s.ids;
  return j;
}

inline ExpertSet expert_set_from_json(const nlohmann::json& j) {
  ExpertSet s;
  s.concept_name = j.at("concept").get<std::string>();
  s.model = j.value("model", "");
  s.checkpoint = j.value("checkpoint", "");
  const auto& r = j.at("rule");
  if (r.at("kind") == "THRESHOLD") {
    s.rule = SelectionRule::threshold(r.at("tau").get<double>());
  } else {
    s.rule = SelectionRule::top_k(r.at("k").get<std::size_t>());
  }
  s.map_hash = parse_hex_id(j.value("map_hash", "0"));
  s.ids = j.at("ids").get<std::vector<std::uint64_t>>();
  if (!std::is_sorted(s.ids.begin(), s.ids.end()) ||
      std::adjacent_find(s.ids.begin(), s.ids.end()) != s.ids.end()) {
    throw ValidationError("expert set ids must be strictly increasing");
  }
  return s;
}

}  // namespace expertlens
