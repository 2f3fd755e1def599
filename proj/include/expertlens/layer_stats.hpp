#pragma once

// Where experts sit in the network: per-block counts and densities, a
// density-weighted location statistic, and AP histograms of shared versus
// concept_name-specific experts.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "expertlens/average_precision.hpp"
#include "expertlens/error.hpp"
#include "expertlens/expert_sets.hpp"
#include "expertlens/neuron_map.hpp"
#include "expertlens/stats.hpp"
#include "json.hpp"

namespace expertlens {

struct LayerBucket {
  std::uint16_t layer = 0;
  Sublayer sublayer = Sublayer::kMlp;
  std::uint32_t units = 0;
  std::size_t count = 0;
  double density = 0.0;  // count / units
};

struct LayerDistribution {
  std::string label;
  std::optional<double> tau;
  std::vector<LayerBucket> buckets;  // one per neuron-map block, map order
  std::size_t total = 0;

  /// Density-weighted mean layer index, optionally restricted to one
  /// sublayer kind; nullopt when the relevant densities are all zero.
  std::optional<double> mean_layer(std::optional<Sublayer> only = std::nullopt) const {
    double num = 0.0, den = 0.0;
    for (const auto& b : buckets) {
      if (only && b.sublayer != *only) continue;
      num += static_cast<double>(b.layer) * b.density;
      den += b.density;
    }
    if (den == 0.0) return std::nullopt;
    return num / den;
  }
};

inline LayerDistribution layer_distribution(std::span<const std::uint64_t> ids, const NeuronMap& map) {
  LayerDistribution d;
  for (const auto& b : map.blocks()) d.buckets.push_back({b.layer, b.sublayer, b.unit_count, 0, 0.0});
  for (auto id : ids) ++d.buckets[map.block_of(id)].count;
  for (auto& b : d.buckets) b.density = b.units == 0 ? 0.0 : static_cast<double>(b.count) / b.units;
  d.total = ids.size();
  return d;
}

inline LayerDistribution layer_distribution(const ExpertSet& set, const NeuronMap& map) {
  if (set.map_hash != 0 && set.map_hash != map.hash()) {
    throw ValidationError("expert set '" + set.concept_name + "' was built on a different neuron map");
  }
  auto d = layer_distribution(std::span<const std::uint64_t>(set.ids), map);
  d.label = set.concept_name;
  if (set.rule.kind == SelectionRule::Kind::kThreshold) d.tau = set.rule.tau;
  return d;
}

inline std::string layer_distribution_csv(std::span<const LayerDistribution> dists) {
  std::string out = "label,tau,layer,sublayer,units,count,density\n";
  for (const auto& d : dists) {
    for (const auto& b : d.buckets) {
      std::ostringstream row;
      row.precision(10);
      row << d.label << ',';
      if (d.tau) row << *d.tau;
      row << ',' << b.layer << ',' << to_string(b.sublayer) << ',' << b.units << ',' << b.count << ',' << b.density
          << '\n';
      out += row.str();
    }
  }
  return out;
}

struct Histogram {
  double lower = 0.0;
  double bin_width = 0.01;
  std::vector<std::size_t> counts;

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

struct SharedHistograms {
  double tau = 0.5;
  Histogram shared_a, nonshared_a, shared_b, nonshared_b;
  std::size_t n_experts_a = 0, n_experts_b = 0, n_shared = 0;
};

/// Splits each concept_name's experts (AP >= tau) into those shared with the other
/// concept_name and the rest, and histograms their AP values over [tau, 1] with
/// fixed-width bins (the last bin is closed at 1).
inline SharedHistograms ap_histograms_shared(const APVector& a, const APVector& b, double tau, double bin_width = 0.01) {
  if (!(a.map == b.map)) throw ValidationError("AP histograms over different neuron maps");
  if (!(bin_width > 0.0)) throw ValidationError("bin width must be positive");
  const auto n_bins = static_cast<std::size_t>(std::max(1.0, std::ceil((1.0 - tau) / bin_width - 1e-9)));
  SharedHistograms h;
  h.tau = tau;
  for (auto* hist : {&h.shared_a, &h.nonshared_a, &h.shared_b, &h.nonshared_b}) {
    hist->lower = tau;
    hist->bin_width = bin_width;
    hist->counts.assign(n_bins, 0);
  }
  auto bin = [&](float v) {
    const auto i = static_cast<std::size_t>(std::max(0.0, std::floor((static_cast<double>(v) - tau) / bin_width)));
    return std::min(i, n_bins - 1);
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_a = static_cast<double>(a.scores[i]) >= tau;
    const bool in_b = static_cast<double>(b.scores[i]) >= tau;
    if (in_a) {
      ++h.n_experts_a;
      ++(in_b ? h.shared_a : h.nonshared_a).counts[bin(a.scores[i])];
    }
    if (in_b) {
      ++h.n_experts_b;
      ++(in_a ? h.shared_b : h.nonshared_b).counts[bin(b.scores[i])];
    }
    h.n_shared += in_a && in_b;
  }
  return h;
}

inline nlohmann::ordered_json to_json(const Histogram& h) {
  return {{"lower", h.lower}, {"bin_width", h.bin_width}, {"counts", h.counts}};
}

inline nlohmann::ordered_json to_json(const SharedHistograms& h) {
  nlohmann::ordered_json j;
  j["tau"] = h.tau;
  j["n_experts_a"] = h.n_experts_a;
  j["n_experts_b"] = h.n_experts_b;
  j["n_shared"] = h.n_shared;
  j["shared_a"] = to_json(h.shared_a);
  j["nonshared_a"] = to_json(h.nonshared_a);
  j["shared_b"] = to_json(h.shared_b);
  j["nonshared_b"] = to_json(h.nonshared_b);
  return j;
}

struct LocationComparison {
  std::size_t n_a = 0, n_b = 0;
  PermutationResult test;
};

/// Two-sample permutation test on the density-weighted mean layer of two
/// concept_name groups (e.g. broader vs specific concepts). Distributions without
/// any expert are skipped.
inline LocationComparison compare_layer_location(std::span<const LayerDistribution> group_a,
                                                 std::span<const LayerDistribution> group_b,
                                                 const PermutationOptions& opts,
                                                 std::optional<Sublayer> only = std::nullopt) {
  std::vector<double> a, b;
  for (const auto& d : group_a)
    if (auto m = d.mean_layer(only)) a.push_back(*m);
  for (const auto& d : group_b)
    if (auto m = d.mean_layer(only)) b.push_back(*m);
  if (a.empty() || b.empty()) throw AnalysisError("layer location comparison needs experts in both groups");
  return {a.size(), b.size(), permutation_test(a, b, opts)};
}

}  // namespace expertlens
