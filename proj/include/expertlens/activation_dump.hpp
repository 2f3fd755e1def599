#pragma once

// ACTD activation dumps: a little-endian binary matrix of pooled per-sentence
// activations plus a JSON sidecar with labels, neuron map and sentence IDs.
//
//   offset  size  field
//   0       4     magic "ACTD"
//   4       4     version (u32) = 1
//   8       8     n_sentences (u64)
//   16      8     n_neurons (u64)
//   24      1     dtype (u8, 0 = f32)
//   25      1     pooling (u8, 0 = MAX, 1 = MEAN)
//   26      2     reserved (u16) = 0
//   28      ...   n_sentences * n_neurons f32, sentence-major

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "expertlens/error.hpp"
#include "expertlens/neuron_map.hpp"
#include "expertlens/io_util.hpp"
#include "json.hpp"

namespace expertlens {

enum class Pooling : std::uint8_t { kMax = 0, kMean = 1 };

inline std::string_view to_string(Pooling p) { return p == Pooling::kMax ? "MAX" : "MEAN"; }

inline Pooling parse_pooling(std::string_view s) {
  if (s == "MAX" || s == "max") return Pooling::kMax;
  if (s == "MEAN" || s == "mean") return Pooling::kMean;
  throw ValidationError("unknown pooling mode '" + std::string(s) + "'");
}

inline constexpr std::size_t kActdHeaderBytes = 28;
inline constexpr std::uint32_t kActdVersion = 1;

struct ActivationDump {
  std::string model;
  std::string checkpoint;
  Pooling pooling = Pooling::kMax;
  NeuronMap map;
  std::vector<std::uint64_t> sentence_ids;
  std::vector<float> values;  // sentence-major

  std::size_t n_sentences() const noexcept { return sentence_ids.size(); }
  std::size_t n_neurons() const noexcept { return static_cast<std::size_t>(map.size()); }

  std::span<const float> row(std::size_t sentence) const {
    return {values.data() + sentence * n_neurons(), n_neurons()};
  }
  std::span<float> row(std::size_t sentence) { return {values.data() + sentence * n_neurons(), n_neurons()}; }

  float at(std::size_t sentence, std::size_t neuron) const { return values[sentence * n_neurons() + neuron]; }

  /// Row index per sentence ID.
  std::unordered_map<std::uint64_t, std::size_t> row_index() const {
    std::unordered_map<std::uint64_t, std::size_t> idx;
    idx.reserve(sentence_ids.size());
    for (std::size_t i = 0; i < sentence_ids.size(); ++i) idx.emplace(sentence_ids[i], i);
    return idx;
  }

  /// Throws ValidationError naming the first violated invariant.
  void validate() const {
    if (values.size() != n_sentences() * n_neurons()) {
      throw ValidationError("dump payload holds " + std::to_string(values.size()) + " values, expected " +
                            std::to_string(n_sentences()) + " x " + std::to_string(n_neurons()));
    }
    for (std::size_t s = 0; s < n_sentences(); ++s) {
      const auto r = row(s);
      for (std::size_t n = 0; n < r.size(); ++n) {
        if (!std::isfinite(r[n])) {
          throw ValidationError("non-finite activation at (" + std::to_string(s) + ", " + std::to_string(n) + ")");
        }
      }
    }
    if (row_index().size() != sentence_ids.size()) throw ValidationError("duplicate sentence IDs in dump");
  }

  friend bool operator==(const ActivationDump&, const ActivationDump&) = default;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace detail

// --- JSON sidecar ------------------------------------------------------------

inline nlohmann::ordered_json neuron_map_to_json(const NeuronMap& map) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& b : map.blocks()) {
    arr.push_back({{"layer", b.layer}, {"sublayer", to_string(b.sublayer)}, {"units", b.unit_count}});
  }
  return arr;
}

inline NeuronMap neuron_map_from_json(const nlohmann::json& j) {
  std::vector<NeuronBlock> blocks;
  for (const auto& b : j) {
    blocks.push_back({b.at("layer").get<std::uint16_t>(), parse_sublayer(b.at("sublayer").get<std::string>()),
                      b.at("units").get<std::uint32_t>()});
  }
  return NeuronMap(std::move(blocks));
}

inline nlohmann::ordered_json dump_sidecar(const ActivationDump& dump) {
  nlohmann::ordered_json j;
  j["format"] = "ACTD";
  j["version"] = kActdVersion;
  j["model"] = dump.model;
  j["checkpoint"] = dump.checkpoint;
  j["pooling"] = to_string(dump.pooling);
  j["neuron_map"] = neuron_map_to_json(dump.map);
  auto ids = nlohmann::ordered_json::array();
  for (auto id : dump.sentence_ids) ids.push_back(hex_id(id));
  j["sentence_ids"] = std::move(ids);
  return j;
}

/// `foo.actd` -> `foo.manifest.json`.
inline std::filesystem::path sidecar_path(const std::filesystem::path& actd) {
  auto p = actd;
  p.replace_extension(".manifest.json");
  return p;
}

// --- binary I/O --------------------------------------------------------------

/// Serialized ACTD bytes (header + payload).
inline std::string encode_actd(const ActivationDump& dump) {
  dump.validate();
  std::string out;
  out.reserve(kActdHeaderBytes + dump.values.size() * sizeof(float));
  out.append("ACTD", 4);
  detail::put_le<std::uint32_t>(out, kActdVersion);
  detail::put_le<std::uint64_t>(out, dump.n_sentences());
  detail::put_le<std::uint64_t>(out, dump.n_neurons());
  detail::put_le<std::uint8_t>(out, 0);
  detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dump.pooling));
  detail::put_le<std::uint16_t>(out, 0);
  out.append(reinterpret_cast<const char*>(dump.values.data()), dump.values.size() * sizeof(float));
  return out;
}

struct ActdHeader {
  std::uint64_t n_sentences = 0;
  std::uint64_t n_neurons = 0;
  Pooling pooling = Pooling::kMax;
};

inline ActdHeader decode_actd_header(std::string_view bytes) {
  if (bytes.size() < kActdHeaderBytes) {
    throw FormatError("ACTD file too short for header: " + std::to_string(bytes.size()) + " bytes");
  }
  if (bytes.substr(0, 4) != "ACTD") throw FormatError("bad magic '" + std::string(bytes.substr(0, 4)) + "'");
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kActdVersion) throw FormatError("unsupported ACTD version " + std::to_string(version));
  ActdHeader h;
  h.n_sentences = detail::get_le<std::uint64_t>(bytes.data() + 8);
  h.n_neurons = detail::get_le<std::uint64_t>(bytes.data() + 16);
  const auto dtype = detail::get_le<std::uint8_t>(bytes.data() + 24);
  const auto pooling = detail::get_le<std::uint8_t>(bytes.data() + 25);
  if (dtype != 0) throw FormatError("unsupported dtype " + std::to_string(dtype));
  if (pooling > 1) throw FormatError("unknown pooling code " + std::to_string(pooling));
  h.pooling = static_cast<Pooling>(pooling);
  const std::uint64_t expected = kActdHeaderBytes + h.n_sentences * h.n_neurons * sizeof(float);
  if (bytes.size() != expected) {
    throw FormatError("truncated or oversized ACTD payload: expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(bytes.size()));
  }
  return h;
}

/// Writes `path` and its JSON sidecar atomically. Returns the ACTD byte count.
inline std::size_t write_activation_dump(const ActivationDump& dump, const std::filesystem::path& path) {
  const std::string bytes = encode_actd(dump);
  atomic_write(path, bytes);
  atomic_write(sidecar_path(path), dump_sidecar(dump).dump(1) + "\n");
  return bytes.size();
}

/// Reads an ACTD file; labels, map and sentence IDs come from the sidecar when
/// it exists (otherwise a single anonymous block is assumed).
inline ActivationDump read_activation_dump(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const ActdHeader h = decode_actd_header(bytes);
  ActivationDump dump;
  dump.pooling = h.pooling;
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    const auto j = nlohmann::json::parse(read_file(side));
    dump.model = j.value("model", "");
    dump.checkpoint = j.value("checkpoint", "");
    dump.map = neuron_map_from_json(j.at("neuron_map"));
    for (const auto& s : j.at("sentence_ids")) dump.sentence_ids.push_back(parse_hex_id(s.get<std::string>()));
    if (j.contains("pooling") && parse_pooling(j["pooling"].get<std::string>()) != h.pooling) {
      throw ValidationError("sidecar pooling disagrees with ACTD header in " + path.string());
    }
  } else {
    dump.map = NeuronMap({{0, Sublayer::kMlp, static_cast<std::uint32_t>(h.n_neurons)}});
    for (std::uint64_t i = 0; i < h.n_sentences; ++i) dump.sentence_ids.push_back(i);
  }
  if (dump.sentence_ids.size() != h.n_sentences || dump.map.size() != h.n_neurons) {
    throw ValidationError("sidecar dimensions (" + std::to_string(dump.sentence_ids.size()) + " x " +
                          std::to_string(dump.map.size()) + ") disagree with ACTD header (" +
                          std::to_string(h.n_sentences) + " x " + std::to_string(h.n_neurons) + ")");
  }
  dump.values.resize(h.n_sentences * h.n_neurons);
  std::memcpy(dump.values.data(), bytes.data() + kActdHeaderBytes, dump.values.size() * sizeof(float));
  return dump;
}

/// Copies the listed sentence rows into a new dump (in the given order).
inline ActivationDump select_rows(const ActivationDump& dump, std::span<const std::uint64_t> ids) {
  const auto idx = dump.row_index();
  ActivationDump out;
  out.model = dump.model;
  out.checkpoint = dump.checkpoint;
  out.pooling = dump.pooling;
  out.map = dump.map;
  out.sentence_ids.assign(ids.begin(), ids.end());
  out.values.resize(ids.size() * dump.n_neurons());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = idx.find(ids[i]);
    if (it == idx.end()) throw ValidationError("sentence " + hex_id(ids[i]) + " not in dump");
    const auto src = dump.row(it->second);
    std::copy(src.begin(), src.end(), out.values.begin() + static_cast<std::ptrdiff_t>(i * dump.n_neurons()));
  }
  return out;
}

}  // namespace expertlens
