#pragma once

// Concept similarity in AP space and embedding space, and alignment of those
// similarities with human judgments.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "expertlens/average_precision.hpp"
#include "expertlens/corpus.hpp"
#include "expertlens/error.hpp"
#include "expertlens/stats.hpp"
#include "json.hpp"

namespace expertlens {

namespace detail {

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("cosine over vectors of different length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

template <typename F>
std::vector<double> transformed(std::span<const float> v, F f) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = f(static_cast<double>(v[i]));
  return out;
}

}  // namespace detail

inline double ap_cosine(const APVector& a, const APVector& b) {
  if (a.size() != b.size()) throw ValidationError("AP vectors differ in length");
  auto id = [](double x) { return x; };
  return detail::cosine(detail::transformed(a.scores, id), detail::transformed(b.scores, id));
}

/// How "negative-adjusted" AP is formed before the cosine.
enum class NegAdjForm : std::uint8_t {
  kAbsDeviation,  // |AP - 0.5|: distance from the positive/negative split
  kShifted,       // AP - 0.5 (literal abs(AP) - 0.5 for nonnegative AP); range [-1, 1]
};

inline NegAdjForm parse_negadj_form(std::string_view s) {
  if (s == "abs-deviation") return NegAdjForm::kAbsDeviation;
  if (s == "shifted") return NegAdjForm::kShifted;
  throw ValidationError("unknown negadj form '" + std::string(s) + "' (abs-deviation|shifted)");
}

inline std::string_view to_string(NegAdjForm f) { return f == NegAdjForm::kAbsDeviation ? "abs-deviation" : "shifted"; }

inline double negadj_cosine(const APVector& a, const APVector& b, NegAdjForm form = NegAdjForm::kAbsDeviation) {
  if (a.size() != b.size()) throw ValidationError("AP vectors differ in length");
  auto t = [form](double x) { return form == NegAdjForm::kAbsDeviation ? std::fabs(x - 0.5) : x - 0.5; };
  return detail::cosine(detail::transformed(a.scores, t), detail::transformed(b.scores, t));
}

inline constexpr double kKlEpsilon = 1e-12;

/// KL(p||q) + KL(q||p) in nats, with p_i = (a_i + eps) / sum(a + eps).
inline double symmetric_kl(std::span<const double> a, std::span<const double> b, double eps = kKlEpsilon) {
  if (a.size() != b.size()) throw ValidationError("KL over vectors of different length");
  if (a.empty()) throw ValidationError("KL over empty vectors");
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0 || b[i] < 0.0) throw ValidationError("KL inputs must be nonnegative");
    sa += a[i] + eps;
    sb += b[i] + eps;
  }
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = (a[i] + eps) / sa;
    const double q = (b[i] + eps) / sb;
    d += (p - q) * (std::log(p) - std::log(q));
  }
  return std::max(0.0, d);
}

inline double symmetric_kl(const APVector& a, const APVector& b, double eps = kKlEpsilon) {
  auto id = [](double x) { return x; };
  return symmetric_kl(detail::transformed(a.scores, id), detail::transformed(b.scores, id), eps);
}

inline double embedding_cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ValidationError("embedding dimension mismatch");
  return detail::cosine(u, v);
}

// --- similarity records ------------------------------------------------------------

struct SimilarityMethod {
  enum class Kind : std::uint8_t { kJaccard, kApCosine, kNegAdjCosine, kSymKl, kEmbCosine } kind = Kind::kJaccard;
  double tau = 0.5;        // JACCARD only
  std::string embedding;   // EMB_COSINE only: "word", "sentence", ...

  static SimilarityMethod jaccard(double tau) { return {Kind::kJaccard, tau, {}}; }
  static SimilarityMethod ap_cosine() { return {Kind::kApCosine, 0.0, {}}; }
  static SimilarityMethod negadj_cosine() { return {Kind::kNegAdjCosine, 0.0, {}}; }
  static SimilarityMethod sym_kl() { return {Kind::kSymKl, 0.0, {}}; }
  static SimilarityMethod emb_cosine(std::string kind) { return {Kind::kEmbCosine, 0.0, std::move(kind)}; }

  std::string label() const {
    switch (kind) {
      case Kind::kJaccard: {
        std::ostringstream s;
        s << "JACCARD(" << tau << ")";
        return s.str();
      }
      case Kind::kApCosine: return "AP_COSINE";
      case Kind::kNegAdjCosine: return "NEGADJ_COSINE";
      case Kind::kSymKl: return "SYM_KL";
      default: return "EMB_COSINE(" + embedding + ")";
    }
  }

  friend bool operator==(const SimilarityMethod&, const SimilarityMethod&) = default;
};

struct SimilarityRecord {
  std::string concept_a;
  std::string concept_b;
  SimilarityMethod method;
  double value = 0.0;
  std::string model;
  std::string checkpoint;
};

struct AlignmentOptions {
  BootstrapOptions bootstrap{};
  PermutationOptions permutation{};
  bool require_all_pairs = false;  // otherwise missing pairs are excluded and counted
};

struct AlignmentReport {
  std::string method;
  std::string model;
  std::string checkpoint;
  double rho = 0.0;
  ConfidenceInterval ci;
  std::size_t n_pairs = 0;
  std::size_t n_missing = 0;
  double p_value = 1.0;
  bool estimate_outside_ci = false;
};

/// Spearman correlation between model similarity and human scores over the
/// human pairs that have a record for `method`.
inline AlignmentReport align_with_humans(std::span<const SimilarityRecord> records, const HumanSimilarityTable& human,
                                         const SimilarityMethod& method, const AlignmentOptions& opts) {
  std::map<std::pair<std::string, std::string>, const SimilarityRecord*> by_pair;
  AlignmentReport rep;
  rep.method = method.label();
  for (const auto& r : records) {
    if (!(r.method == method)) continue;
    by_pair[pair_key(r.concept_a, r.concept_b)] = &r;
    rep.model = r.model;
    rep.checkpoint = r.checkpoint;
  }
  std::vector<double> model_sim, human_sim;
  for (const auto& p : human.pairs) {
    const auto it = by_pair.find(pair_key(p.word_a, p.word_b));
    if (it == by_pair.end()) {
      if (opts.require_all_pairs) {
        throw ValidationError("no " + rep.method + " similarity for human pair (" + p.word_a + ", " + p.word_b + ")");
      }
      ++rep.n_missing;
      continue;
    }
    model_sim.push_back(it->second->value);
    human_sim.push_back(p.score);
  }
  rep.n_pairs = model_sim.size();
  if (rep.n_pairs < 3) {
    throw AnalysisError(rep.method + ": only " + std::to_string(rep.n_pairs) + " human pairs matched (need 3)");
  }
  rep.rho = spearman(model_sim, human_sim);
  rep.ci = bootstrap_ci(
      rep.n_pairs,
      [&](std::span<const std::size_t> idx) {
        std::vector<double> x, y;
        x.reserve(idx.size());
        y.reserve(idx.size());
        for (auto i : idx) {
          x.push_back(model_sim[i]);
          y.push_back(human_sim[i]);
        }
        return spearman(x, y);
      },
      opts.bootstrap);
  rep.p_value = correlation_permutation_p(model_sim, human_sim, opts.permutation);
  rep.estimate_outside_ci = rep.rho < rep.ci.lower || rep.rho > rep.ci.upper;
  return rep;
}

inline nlohmann::ordered_json to_json(const ConfidenceInterval& ci) {
  nlohmann::ordered_json j;
  j["lower"] = ci.lower;
  j["upper"] = ci.upper;
  j["level"] = ci.level;
  j["replicates"] = ci.replicates;
  j["undefined_replicates"] = ci.undefined_replicates;
  j["degenerate"] = ci.degenerate;
  return j;
}

inline nlohmann::ordered_json to_json(const AlignmentReport& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["model"] = r.model;
  j["checkpoint"] = r.checkpoint;
  j["rho"] = r.rho;
  j["ci"] = to_json(r.ci);
  j["n_pairs"] = r.n_pairs;
  j["n_missing"] = r.n_missing;
  j["p_value"] = r.p_value;
  j["estimate_outside_ci"] = r.estimate_outside_ci;
  return j;
}

}  // namespace expertlens
