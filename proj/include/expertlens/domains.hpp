#pragma once

// Domain structure in expert space: shared cores across the specific concepts
// of a domain, how much of a core the broader concept_name carries, randomized
// pseudo-domain baselines, and concept_name-graph export.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "expertlens/error.hpp"
#include "expertlens/expert_sets.hpp"
#include "expertlens/parallel.hpp"
#include "expertlens/rng.hpp"
#include "json.hpp"

namespace expertlens {

struct DomainSpec {
  std::string name;
  std::vector<std::string> specifics;
  std::string broader;

  void validate() const {
    std::set<std::string> seen(specifics.begin(), specifics.end());
    if (seen.size() != specifics.size()) throw ValidationError("domain '" + name + "' repeats a concept");
    if (seen.count(broader)) throw ValidationError("domain '" + name + "': broader concept listed as specific");
    if (specifics.size() < 2) throw ValidationError("domain '" + name + "' needs at least 2 specific concepts");
  }
};

inline nlohmann::ordered_json to_json(const DomainSpec& d) {
  return {{"name", d.name}, {"specifics", d.specifics}, {"broader", d.broader}};
}

inline DomainSpec domain_from_json(const nlohmann::json& j) {
  DomainSpec d{j.at("name").get<std::string>(), j.at("specifics").get<std::vector<std::string>>(),
               j.at("broader").get<std::string>()};
  d.validate();
  return d;
}

struct SharedCore {
  std::vector<std::uint64_t> ids;
  double pct_shared = 0.0;  // |∩| / |∪| * 100
  bool empty_union = false;
};

inline SharedCore shared_core_ids(std::span<const std::vector<std::uint64_t>> sets) {
  if (sets.size() < 2) throw ValidationError("shared core needs at least 2 expert sets");
  SharedCore out;
  std::vector<std::uint64_t> inter = sets[0], uni = sets[0];
  for (std::size_t i = 1; i < sets.size(); ++i) {
    inter = set_intersection(inter, sets[i]);
    uni = set_union(uni, sets[i]);
  }
  out.ids = std::move(inter);
  out.empty_union = uni.empty();
  out.pct_shared = uni.empty() ? 0.0 : 100.0 * static_cast<double>(out.ids.size()) / static_cast<double>(uni.size());
  return out;
}

/// Intersection of the specific concepts' expert sets, as a percentage of
/// their union.
inline SharedCore shared_core(std::span<const ExpertSet> sets) {
  if (sets.size() < 2) throw ValidationError("shared core needs at least 2 expert sets");
  std::vector<std::vector<std::uint64_t>> ids;
  for (const auto& s : sets) {
    if (!(s.rule == sets[0].rule) || s.checkpoint != sets[0].checkpoint || s.map_hash != sets[0].map_hash) {
      throw ValidationError("shared core over sets with different rule, checkpoint or neuron map");
    }
    ids.push_back(s.ids);
  }
  return shared_core_ids(ids);
}

/// |core ∩ broader| / |core| * 100; nullopt for an empty core.
inline std::optional<double> broader_overlap(std::span<const std::uint64_t> core, std::span<const std::uint64_t> broader) {
  if (core.empty()) return std::nullopt;
  return 100.0 * static_cast<double>(intersection_size(core, broader)) / static_cast<double>(core.size());
}

inline std::optional<double> broader_overlap(std::span<const std::uint64_t> core, const ExpertSet& broader) {
  return broader_overlap(core, std::span<const std::uint64_t>(broader.ids));
}

struct BaselineSummary {
  std::size_t replicates = 0;
  std::size_t defined = 0;  // replicates where the statistic exists
  std::optional<double> mean;
  std::optional<double> median;
  std::optional<double> sd;
};

struct DomainResult {
  std::string domain;
  std::vector<std::uint64_t> core;
  double pct_shared = 0.0;
  bool empty_union = false;
  std::optional<double> pct_broader;  // null: empty core
  BaselineSummary baseline_shared;
  BaselineSummary baseline_broader;
  double p_shared = 1.0;
  std::optional<double> p_broader;
};

struct DomainReport {
  std::string model;
  std::string checkpoint;
  double tau = 0.5;
  std::size_t replicates = 0;
  std::vector<DomainResult> domains;
  std::optional<double> mean_pct_shared;
  std::optional<double> mean_pct_broader;
  std::size_t n_undefined_broader = 0;
  std::optional<double> mean_baseline_shared;
  std::optional<double> mean_baseline_broader;
};

namespace detail {

inline BaselineSummary summarize(std::vector<double> defined, std::size_t replicates) {
  BaselineSummary s;
  s.replicates = replicates;
  s.defined = defined.size();
  if (defined.empty()) return s;
  std::sort(defined.begin(), defined.end());
  double sum = 0.0;
  for (double v : defined) sum += v;
  const double m = sum / static_cast<double>(defined.size());
  double ss = 0.0;
  for (double v : defined) ss += (v - m) * (v - m);
  s.mean = m;
  s.median = sorted_quantile(defined, 0.5);
  s.sd = defined.size() > 1 ? std::sqrt(ss / static_cast<double>(defined.size() - 1)) : 0.0;
  return s;
}

}  // namespace detail

struct BaselineOptions {
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Observed domain statistics plus a randomized baseline per domain: each
/// replicate pairs the domain's broader concept_name with `n_specific` concepts
/// drawn uniformly without repetition from every concept_name except that broader
/// one. One-sided p = (1 + #{baseline >= observed}) / (1 + R); replicates with
/// an undefined statistic never count as exceeding.
inline DomainReport random_domain_baseline(const std::map<std::string, ExpertSet>& sets,
                                           std::span<const DomainSpec> domains, const BaselineOptions& opts) {
  if (opts.replicates < 1) throw ValidationError("baseline needs R >= 1");
  DomainReport rep;
  rep.replicates = opts.replicates;
  std::vector<std::string> all;
  for (const auto& [name, s] : sets) all.push_back(name);  // sorted by map order
  if (!sets.empty()) {
    const auto& first = sets.begin()->second;
    rep.model = first.model;
    rep.checkpoint = first.checkpoint;
    rep.tau = first.rule.tau;
  }
  auto get = [&](const std::string& c) -> const ExpertSet& {
    const auto it = sets.find(c);
    if (it == sets.end()) throw ValidationError("no expert set for concept '" + c + "'");
    return it->second;
  };
  double sum_shared = 0.0, sum_broader = 0.0, sum_base_shared = 0.0, sum_base_broader = 0.0;
  std::size_t n_broader = 0, n_base_shared = 0, n_base_broader = 0;
  for (const auto& d : domains) {
    d.validate();
    std::vector<ExpertSet> specifics;
    for (const auto& c : d.specifics) specifics.push_back(get(c));
    const ExpertSet& broader = get(d.broader);
    const SharedCore core = shared_core(specifics);
    DomainResult res;
    res.domain = d.name;
    res.core = core.ids;
    res.pct_shared = core.pct_shared;
    res.empty_union = core.empty_union;
    res.pct_broader = broader_overlap(core.ids, broader);

    std::vector<std::string> candidates;
    for (const auto& c : all)
      if (c != d.broader) candidates.push_back(c);
    if (candidates.size() < d.specifics.size()) {
      throw ValidationError("concept pool too small for pseudo-domains of " + std::to_string(d.specifics.size()));
    }
    std::vector<double> base_shared(opts.replicates);
    std::vector<std::optional<double>> base_broader(opts.replicates);
    const std::uint64_t root = derive_key(opts.seed, "domain-baseline", d.name);
    parallel_for(
        opts.replicates, opts.threads,
        [&](std::size_t r) {
          CounterRng rng(derive_key(root, r));
          std::vector<std::size_t> pick(candidates.size());
          for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
          rng.partial_shuffle(std::span(pick), d.specifics.size());
          std::vector<std::vector<std::uint64_t>> ids;
          for (std::size_t i = 0; i < d.specifics.size(); ++i) ids.push_back(get(candidates[pick[i]]).ids);
          const SharedCore pseudo = shared_core_ids(ids);
          base_shared[r] = pseudo.pct_shared;
          base_broader[r] = broader_overlap(pseudo.ids, broader);
        },
        16);
    std::size_t ge_shared = 0, ge_broader = 0;
    std::vector<double> defined_broader;
    for (std::size_t r = 0; r < opts.replicates; ++r) {
      ge_shared += base_shared[r] >= res.pct_shared;
      if (base_broader[r]) {
        defined_broader.push_back(*base_broader[r]);
        if (res.pct_broader && *base_broader[r] >= *res.pct_broader) ++ge_broader;
      }
    }
    const double denom = 1.0 + static_cast<double>(opts.replicates);
    res.p_shared = (1.0 + static_cast<double>(ge_shared)) / denom;
    if (res.pct_broader) res.p_broader = (1.0 + static_cast<double>(ge_broader)) / denom;
    res.baseline_shared = detail::summarize(base_shared, opts.replicates);
    res.baseline_broader = detail::summarize(defined_broader, opts.replicates);

    sum_shared += res.pct_shared;
    if (res.pct_broader) {
      sum_broader += *res.pct_broader;
      ++n_broader;
    } else {
      ++rep.n_undefined_broader;
    }
    if (res.baseline_shared.mean) {
      sum_base_shared += *res.baseline_shared.mean;
      ++n_base_shared;
    }
    if (res.baseline_broader.mean) {
      sum_base_broader += *res.baseline_broader.mean;
      ++n_base_broader;
    }
    rep.domains.push_back(std::move(res));
  }
  if (!domains.empty()) rep.mean_pct_shared = sum_shared / static_cast<double>(domains.size());
  if (n_broader > 0) rep.mean_pct_broader = sum_broader / static_cast<double>(n_broader);
  if (n_base_shared > 0) rep.mean_baseline_shared = sum_base_shared / static_cast<double>(n_base_shared);
  if (n_base_broader > 0) rep.mean_baseline_broader = sum_base_broader / static_cast<double>(n_base_broader);
  return rep;
}

namespace detail {
inline nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}
inline nlohmann::ordered_json to_json(const BaselineSummary& s) {
  return {{"replicates", s.replicates}, {"defined", s.defined}, {"mean", opt(s.mean)},
          {"median", opt(s.median)},    {"sd", opt(s.sd)}};
}
}  // namespace detail

inline nlohmann::ordered_json to_json(const DomainReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["checkpoint"] = r.checkpoint;
  j["tau"] = r.tau;
  j["replicates"] = r.replicates;
  j["pct_shared"] = detail::opt(r.mean_pct_shared);
  j["pct_broader"] = detail::opt(r.mean_pct_broader);
  j["n_undefined_broader"] = r.n_undefined_broader;
  j["baseline_mean_shared"] = detail::opt(r.mean_baseline_shared);
  j["baseline_mean_broader"] = detail::opt(r.mean_baseline_broader);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : r.domains) {
    nlohmann::ordered_json jd;
    jd["domain"] = d.domain;
    jd["core_size"] = d.core.size();
    jd["core"] = d.core;
    jd["pct_shared"] = d.pct_shared;
    jd["empty_union"] = d.empty_union;
    jd["pct_broader"] = detail::opt(d.pct_broader);
    jd["baseline_shared"] = detail::to_json(d.baseline_shared);
    jd["baseline_broader"] = detail::to_json(d.baseline_broader);
    jd["p_shared"] = d.p_shared;
    jd["p_broader"] = detail::opt(d.p_broader);
    arr.push_back(std::move(jd));
  }
  j["domains"] = std::move(arr);
  return j;
}

// --- concept_name graph ------------------------------------------------------------------

struct ConceptGraph {
  struct Edge {
    std::size_t a = 0;
    std::size_t b = 0;
    double weight = 0.0;
  };
  std::vector<std::string> nodes;
  std::vector<std::string> domains;  // per node; empty string when unknown
  std::vector<Edge> edges;

  std::string to_dot() const {
    std::ostringstream out;
    out << std::setprecision(6);
    out << "graph concepts {\n";
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      out << "  \"" << nodes[i] << "\" [domain=\"" << domains[i] << "\"];\n";
    }
    for (const auto& e : edges) {
      out << "  \"" << nodes[e.a] << "\" -- \"" << nodes[e.b] << "\" [weight=" << e.weight
          << ", penwidth=" << 1.0 + 10.0 * e.weight << "];\n";
    }
    out << "}\n";
    return out.str();
  }

  nlohmann::ordered_json to_node_link() const {
    nlohmann::ordered_json j;
    j["directed"] = false;
    j["multigraph"] = false;
    auto ns = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < nodes.size(); ++i) ns.push_back({{"id", nodes[i]}, {"domain", domains[i]}});
    auto ls = nlohmann::ordered_json::array();
    for (const auto& e : edges) ls.push_back({{"source", nodes[e.a]}, {"target", nodes[e.b]}, {"weight", e.weight}});
    j["nodes"] = std::move(ns);
    j["links"] = std::move(ls);
    return j;
  }
};

/// Undirected graph with an edge wherever the pairwise Jaccard is positive
/// and at least `threshold`. `sim` is row-major n x n.
inline ConceptGraph export_concept_graph(std::span<const std::string> concepts, std::span<const double> sim,
                                         double threshold, const std::map<std::string, std::string>& domain_of = {}) {
  const std::size_t n = concepts.size();
  if (sim.size() != n * n) throw ValidationError("similarity matrix must be n x n");
  ConceptGraph g;
  g.nodes.assign(concepts.begin(), concepts.end());
  for (const auto& c : concepts) {
    const auto it = domain_of.find(c);
    g.domains.push_back(it == domain_of.end() ? "" : it->second);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::fabs(sim[i * n + j] - sim[j * n + i]) > 1e-9) {
        throw ValidationError("similarity matrix is not symmetric at (" + concepts[i] + ", " + concepts[j] + ")");
      }
      const double w = sim[i * n + j];
      if (w > 0.0 && w >= threshold) g.edges.push_back({i, j, w});
    }
  }
  return g;
}

}  // namespace expertlens
