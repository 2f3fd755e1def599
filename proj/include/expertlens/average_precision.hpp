#pragma once

// Per-neuron expertise scoring: average precision of a neuron's pooled
// activation, used as a detector for concept_name presence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "expertlens/activation_dump.hpp"
#include "expertlens/corpus.hpp"
#include "expertlens/error.hpp"
#include "expertlens/parallel.hpp"

namespace expertlens {

/// Reduces one neuron's per-token activations in a sentence to a single value.
inline double pool_tokens(std::span<const float> token_values, Pooling mode) {
  if (token_values.empty()) throw ValidationError("cannot pool an empty token list");
  double acc = mode == Pooling::kMax ? static_cast<double>(token_values[0]) : 0.0;
  for (float v : token_values) {
    if (!std::isfinite(v)) throw ValidationError("non-finite token activation");
    if (mode == Pooling::kMax) {
      acc = std::max(acc, static_cast<double>(v));
    } else {
      acc += v;
    }
  }
  return mode == Pooling::kMax ? acc : acc / static_cast<double>(token_values.size());
}

namespace detail {

/// Sorts `order` into ranking order: score descending, then negatives before
/// positives, then ascending index. This is the pessimistic tie rule.
template <typename T>
void rank_order(std::span<const T> scores, std::span<const std::uint8_t> labels, std::vector<std::uint32_t>& order) {
  order.resize(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (labels[a] != labels[b]) return labels[a] < labels[b];
    return a < b;
  });
}

template <typename T>
double ap_from_order(std::span<const T>, std::span<const std::uint8_t> labels, std::span<const std::uint32_t> order,
                     std::size_t n_pos) {
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] != 0) {
      ++tp;
      sum += static_cast<double>(tp) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(n_pos);
}

/// Same AP as rank_order + ap_from_order for f32 columns. Items that tie on
/// score and label are interchangeable for AP, so a 33-bit key (inverted
/// order-preserving score bits, then the label) fully determines the result
/// and is sorted with a three-pass LSD radix sort.
inline double ap_packed(std::span<const float> col, std::span<const std::uint8_t> labels, std::size_t n_pos,
                        std::vector<std::uint64_t>& keys, std::vector<std::uint64_t>& tmp) {
  constexpr int kBits = 11;
  constexpr std::size_t kBuckets = std::size_t{1} << kBits;
  const std::size_t n = col.size();
  keys.resize(n);
  tmp.resize(n);
  std::size_t hist[3][kBuckets] = {};
  for (std::size_t i = 0; i < n; ++i) {
    const float v = col[i] == 0.0f ? 0.0f : col[i];  // -0 ties with +0
    std::uint32_t u;
    std::memcpy(&u, &v, sizeof u);
    u = (u & 0x80000000u) ? ~u : (u | 0x80000000u);
    const std::uint64_t k = (static_cast<std::uint64_t>(~u) << 1) | static_cast<std::uint64_t>(labels[i] != 0);
    keys[i] = k;
    for (int p = 0; p < 3; ++p) ++hist[p][(k >> (p * kBits)) & (kBuckets - 1)];
  }
  for (int p = 0; p < 3; ++p) {
    std::size_t sum = 0;
    for (auto& h : hist[p]) {
      const std::size_t c = h;
      h = sum;
      sum += c;
    }
    for (std::size_t i = 0; i < n; ++i) tmp[hist[p][(keys[i] >> (p * kBits)) & (kBuckets - 1)]++] = keys[i];
    keys.swap(tmp);
  }
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (keys[r] & 1u) {
      ++tp;
      sum += static_cast<double>(tp) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(n_pos);
}

}  // namespace detail

/// Average precision of `scores` against binary `labels`: the mean, over
/// positives in ranking order, of precision at that positive's rank. Ties are
/// broken pessimistically (negatives first, then by index).
template <typename T>
double average_precision(std::span<const T> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("scores/labels length mismatch: " + std::to_string(scores.size()) + " vs " +
                          std::to_string(labels.size()));
  }
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(static_cast<double>(scores[i]))) throw ValidationError("non-finite score at " + std::to_string(i));
    n_pos += labels[i] != 0;
  }
  if (n_pos == 0 || n_pos == scores.size()) throw ValidationError("average precision needs both positive and negative labels");
  std::vector<std::uint32_t> order;
  detail::rank_order(scores, labels, order);
  return detail::ap_from_order(scores, labels, std::span<const std::uint32_t>(order), n_pos);
}

inline double average_precision(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  return average_precision(std::span<const double>(scores), std::span<const std::uint8_t>(labels));
}

/// AP score per neuron for one (concept_name, checkpoint).
struct APVector {
  std::string concept_name;
  std::string model;
  std::string checkpoint;
  Pooling pooling = Pooling::kMax;
  NeuronMap map;
  std::vector<float> scores;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;

  std::size_t size() const noexcept { return scores.size(); }

  void validate() const {
    if (scores.size() != map.size()) throw ValidationError("AP vector length differs from neuron map size");
    if (n_pos == 0 || n_neg == 0) throw ValidationError("AP vector '" + concept_name + "' lacks positive or negative counts");
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!(scores[i] >= 0.0f && scores[i] <= 1.0f)) throw ValidationError("AP outside [0,1] at neuron " + std::to_string(i));
    }
  }

  friend bool operator==(const APVector&, const APVector&) = default;
};

struct ScoreOptions {
  unsigned threads = 1;
  std::size_t block = 256;  // neurons transposed per task
};

/// AP of every neuron in `dump` on the manifest's positive and negative
/// sentences. Each neuron is computed independently, so the result does not
/// depend on the worker count.
inline APVector score_all_neurons(const ActivationDump& dump, const ConceptManifest& manifest,
                                  ScoreOptions opts = {}) {
  manifest.validate_for_scoring();
  const auto index = dump.row_index();
  std::vector<std::size_t> rows;
  std::vector<std::uint8_t> labels;
  rows.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    const auto it = index.find(e.id);
    if (it == index.end()) {
      throw ValidationError("sentence " + hex_id(e.id) + " of concept '" + manifest.concept_name + "' missing from dump " +
                            dump.checkpoint);
    }
    rows.push_back(it->second);
    labels.push_back(e.label == Label::kPositive ? 1 : 0);
  }

  APVector out;
  out.concept_name = manifest.concept_name;
  out.model = dump.model;
  out.checkpoint = dump.checkpoint;
  out.pooling = dump.pooling;
  out.map = dump.map;
  out.n_pos = manifest.count(Label::kPositive);
  out.n_neg = manifest.count(Label::kNegative);
  const std::size_t n_neurons = dump.n_neurons();
  out.scores.assign(n_neurons, 0.0f);

  const std::size_t block = std::max<std::size_t>(1, opts.block);
  const std::size_t n_blocks = (n_neurons + block - 1) / block;
  const std::size_t m = rows.size();
  const std::span<const std::uint8_t> label_span(labels);
  parallel_for(n_blocks, opts.threads, [&](std::size_t b) {
    const std::size_t first = b * block;
    const std::size_t width = std::min(block, n_neurons - first);
    // blocked transpose: column j of this block is contiguous in `cols`
    std::vector<float> cols(width * m);
    for (std::size_t i = 0; i < m; ++i) {
      const float* src = dump.values.data() + rows[i] * n_neurons + first;
      for (std::size_t j = 0; j < width; ++j) cols[j * m + i] = src[j];
    }
    std::vector<std::uint64_t> keys, tmp;
    for (std::size_t j = 0; j < width; ++j) {
      const std::span<const float> col(cols.data() + j * m, m);
      out.scores[first + j] = static_cast<float>(detail::ap_packed(col, label_span, out.n_pos, keys, tmp));
    }
  });
  return out;
}

// --- APV persistence ----------------------------------------------------------

inline std::filesystem::path apv_sidecar_path(const std::filesystem::path& apv) {
  auto p = apv;
  p += ".json";
  return p;
}

inline std::string encode_apv(const APVector& ap) {
  std::string out("APV1", 4);
  detail::put_le<std::uint64_t>(out, ap.scores.size());
  out.append(reinterpret_cast<const char*>(ap.scores.data()), ap.scores.size() * sizeof(float));
  return out;
}

inline nlohmann::ordered_json apv_sidecar(const APVector& ap) {
  nlohmann::ordered_json j;
  j["concept"] = ap.concept_name;
  j["model"] = ap.model;
  j["checkpoint"] = ap.checkpoint;
  j["n_pos"] = ap.n_pos;
  j["n_neg"] = ap.n_neg;
  j["pooling"] = to_string(ap.pooling);
  j["map_hash"] = hex_id(ap.map.hash());
  j["neuron_map"] = neuron_map_to_json(ap.map);
  return j;
}

inline void write_apv(const APVector& ap, const std::filesystem::path& path) {
  atomic_write(path, encode_apv(ap));
  atomic_write(apv_sidecar_path(path), apv_sidecar(ap).dump(1) + "\n");
}

inline APVector read_apv(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 12 || bytes.substr(0, 4) != "APV1") throw FormatError("bad APV magic in " + path.string());
  const auto n = detail::get_le<std::uint64_t>(bytes.data() + 4);
  if (bytes.size() != 12 + n * sizeof(float)) {
    throw FormatError("APV payload size mismatch in " + path.string() + ": expected " +
                      std::to_string(12 + n * sizeof(float)) + " bytes, found " + std::to_string(bytes.size()));
  }
  APVector ap;
  ap.scores.resize(n);
  std::memcpy(ap.scores.data(), bytes.data() + 12, n * sizeof(float));
  const auto j = nlohmann::json::parse(read_file(apv_sidecar_path(path)));
  ap.concept_name = j.at("concept").get<std::string>();
  ap.model = j.value("model", "");
  ap.checkpoint = j.value("checkpoint", "");
  ap.n_pos = j.at("n_pos").get<std::size_t>();
  ap.n_neg = j.at("n_neg").get<std::size_t>();
  ap.pooling = parse_pooling(j.value("pooling", "MAX"));
  ap.map = neuron_map_from_json(j.at("neuron_map"));
  ap.validate();
  return ap;
}

}  // namespace expertlens
