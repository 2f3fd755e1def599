#pragma once

// Concept manifests, negative-set sampling, human similarity tables and
// small corpus statistics.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "expertlens/error.hpp"
#include "expertlens/io_util.hpp"
#include "expertlens/rng.hpp"
#include "json.hpp"

namespace expertlens {

enum class Label : std::uint8_t { kNegative = 0, kPositive = 1 };
enum class PromptType : std::uint8_t { kFact, kStory, kOther };

inline std::string_view to_string(Label l) { return l == Label::kPositive ? "POSITIVE" : "NEGATIVE"; }
inline std::string_view to_string(PromptType p) {
  switch (p) {
    case PromptType::kFact: return "FACT";
    case PromptType::kStory: return "STORY";
    default: return "OTHER";
  }
}
inline Label parse_label(std::string_view s) {
  if (s == "POSITIVE") return Label::kPositive;
  if (s == "NEGATIVE") return Label::kNegative;
  throw ValidationError("unknown label '" + std::string(s) + "'");
}
inline PromptType parse_prompt_type(std::string_view s) {
  if (s == "FACT") return PromptType::kFact;
  if (s == "STORY") return PromptType::kStory;
  if (s == "OTHER") return PromptType::kOther;
  throw ValidationError("unknown prompt type '" + std::string(s) + "'");
}

/// Trim and collapse internal whitespace runs to one space.
inline std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

/// Stable sentence identity: FNV-1a of the normalized text.
inline std::uint64_t sentence_id(std::string_view text) { return fnv1a(normalize_text(text)); }

struct ManifestEntry {
  std::uint64_t id = 0;
  Label label = Label::kPositive;
  std::uint64_t text_hash = 0;  // FNV-1a of the raw text; 0 if unknown
  PromptType prompt = PromptType::kOther;
};

struct ConceptManifest {
  std::string concept_name;
  std::string generator;
  std::vector<ManifestEntry> entries;

  std::size_t count(Label l) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [l](const auto& e) { return e.label == l; }));
  }

  std::vector<std::uint64_t> ids(Label l) const {
    std::vector<std::uint64_t> out;
    for (const auto& e : entries)
      if (e.label == l) out.push_back(e.id);
    return out;
  }

  /// Unique IDs; two entries with one ID but different text hashes are a
  /// hash collision and reported as such.
  void validate() const {
    std::unordered_map<std::uint64_t, std::uint64_t> seen;
    for (const auto& e : entries) {
      auto [it, inserted] = seen.emplace(e.id, e.text_hash);
      if (!inserted) {
        if (it->second != e.text_hash && it->second != 0 && e.text_hash != 0) {
          throw ValidationError("sentence id collision in manifest '" + concept_name + "': " + hex_id(e.id));
        }
        throw ValidationError("duplicate sentence id " + hex_id(e.id) + " in manifest '" + concept_name + "'");
      }
    }
  }

  /// Additionally requires both classes, as scoring does.
  void validate_for_scoring() const {
    validate();
    if (count(Label::kPositive) == 0 || count(Label::kNegative) == 0) {
      throw ValidationError("manifest '" + concept_name + "' needs at least one positive and one negative sentence (has " +
                            std::to_string(count(Label::kPositive)) + "/" + std::to_string(count(Label::kNegative)) +
                            ")");
    }
  }
};

inline nlohmann::ordered_json to_json(const ConceptManifest& m) {
  nlohmann::ordered_json j;
  j["concept"] = m.concept_name;
  j["generator"] = m.generator;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    nlohmann::ordered_json je;
    je["id"] = hex_id(e.id);
    je["label"] = to_string(e.label);
    je["text_hash"] = hex_id(e.text_hash);
    je["prompt"] = to_string(e.prompt);
    arr.push_back(std::move(je));
  }
  j["entries"] = std::move(arr);
  return j;
}

inline ConceptManifest manifest_from_json(const nlohmann::json& j) {
  ConceptManifest m;
  m.concept_name = j.at("concept").get<std::string>();
  m.generator = j.value("generator", "");
  for (const auto& je : j.at("entries")) {
    ManifestEntry e;
    if (je.contains("text")) {
      const auto text = je["text"].get<std::string>();
      e.id = sentence_id(text);
      e.text_hash = fnv1a(text);
      if (je.contains("id") && parse_hex_id(je["id"].get<std::string>()) != e.id) {
        throw ValidationError("manifest '" + m.concept_name + "': id does not match hash of text '" + text + "'");
      }
    } else {
      e.id = parse_hex_id(je.at("id").get<std::string>());
      if (je.contains("text_hash")) e.text_hash = parse_hex_id(je["text_hash"].get<std::string>());
    }
    e.label = parse_label(je.value("label", "POSITIVE"));
    e.prompt = parse_prompt_type(je.value("prompt", "OTHER"));
    m.entries.push_back(e);
  }
  m.validate();
  return m;
}

inline ConceptManifest read_manifest(const std::filesystem::path& path) {
  try {
    return manifest_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void write_manifest(const ConceptManifest& m, const std::filesystem::path& path) {
  atomic_write(path, to_json(m).dump(1) + "\n");
}

/// Uniform sample without replacement of `size` positive sentence IDs drawn
/// from the manifests of non-target concepts. Pool order is canonical (by
/// concept_name name, then manifest order) so the result depends only on
/// (pool contents, size, seed).
inline std::vector<std::uint64_t> build_negative_set(std::span<const ConceptManifest> pool, std::string_view target,
                                                     std::size_t size, std::uint64_t seed) {
  std::vector<const ConceptManifest*> sorted;
  for (const auto& m : pool) {
    if (m.concept_name == target) throw ValidationError("negative pool contains the target concept '" + std::string(target) + "'");
    sorted.push_back(&m);
  }
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->concept_name < b->concept_name; });
  std::vector<std::uint64_t> ids;
  std::unordered_set<std::uint64_t> seen;
  for (const auto* m : sorted)
    for (const auto& e : m->entries)
      if (e.label == Label::kPositive && seen.insert(e.id).second) ids.push_back(e.id);
  if (ids.size() < size) {
    throw ValidationError("negative pool for '" + std::string(target) + "' holds " + std::to_string(ids.size()) +
                          " sentences, " + std::to_string(size) + " requested");
  }
  CounterRng rng(derive_key(seed, "negative-set", target));
  rng.partial_shuffle(std::span(ids), size);
  ids.resize(size);
  return ids;
}

/// Scoring manifest for `target`: its positives (all, or a seeded sample of
/// `pos_size`) plus negatives sampled from the other concepts. Negatives
/// already present in the target's manifest are kept as-is.
inline ConceptManifest make_scoring_manifest(const ConceptManifest& target, std::span<const ConceptManifest> all,
                                             std::size_t pos_size, std::size_t neg_size, std::uint64_t seed) {
  ConceptManifest out;
  out.concept_name = target.concept_name;
  out.generator = target.generator;
  std::vector<ManifestEntry> pos;
  for (const auto& e : target.entries)
    if (e.label == Label::kPositive) pos.push_back(e);
  if (pos_size > 0 && pos_size < pos.size()) {
    CounterRng rng(derive_key(seed, "positive-set", target.concept_name));
    rng.partial_shuffle(std::span(pos), pos_size);
    pos.resize(pos_size);
  } else if (pos_size > pos.size()) {
    throw ValidationError("concept '" + target.concept_name + "' has " + std::to_string(pos.size()) + " positives, " +
                          std::to_string(pos_size) + " requested");
  }
  out.entries = pos;
  if (target.count(Label::kNegative) > 0) {
    for (const auto& e : target.entries)
      if (e.label == Label::kNegative) out.entries.push_back(e);
    return out;
  }
  std::vector<ConceptManifest> others;
  for (const auto& m : all)
    if (m.concept_name != target.concept_name) others.push_back(m);
  for (auto id : build_negative_set(others, target.concept_name, neg_size, seed)) {
    out.entries.push_back({id, Label::kNegative, 0, PromptType::kOther});
  }
  return out;
}

struct TypeTokenStats {
  std::vector<double> per_document;
  double mean = 0.0;
};

inline TypeTokenStats type_token_ratio(std::span<const std::vector<std::string>> documents) {
  TypeTokenStats out;
  if (documents.empty()) throw ValidationError("type/token ratio of an empty corpus");
  double sum = 0.0;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    const auto& doc = documents[d];
    if (doc.empty()) throw ValidationError("document " + std::to_string(d) + " is empty");
    const std::unordered_set<std::string_view> types(doc.begin(), doc.end());
    const double r = static_cast<double>(types.size()) / static_cast<double>(doc.size());
    out.per_document.push_back(r);
    sum += r;
  }
  out.mean = sum / static_cast<double>(documents.size());
  return out;
}

/// Fallback tokenizer: lowercase, split on anything that is not alphanumeric
/// or an apostrophe. No lemmatization or part-of-speech filtering.
inline std::vector<std::string> basic_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Whitespace split; for pre-lemmatized token lines.
inline std::vector<std::string> split_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

// --- human similarity tables -------------------------------------------------

enum class SimilarityBin : std::uint8_t { kUnrelated = 0, kWeak = 1, kStrong = 2 };

inline std::string_view to_string(SimilarityBin b) {
  switch (b) {
    case SimilarityBin::kUnrelated: return "UNRELATED";
    case SimilarityBin::kWeak: return "WEAK";
    default: return "STRONG";
  }
}

inline std::optional<SimilarityBin> parse_bin(std::string_view s) {
  std::string up(s);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "UNRELATED" || up == "NONE") return SimilarityBin::kUnrelated;
  if (up == "WEAK") return SimilarityBin::kWeak;
  if (up == "STRONG") return SimilarityBin::kStrong;
  return std::nullopt;
}

struct HumanPair {
  std::string word_a;
  std::string word_b;
  double score = 0.0;  // continuous score, or the bin's ordinal
  std::optional<SimilarityBin> bin;
};

/// Unordered pair key.
inline std::pair<std::string, std::string> pair_key(std::string_view a, std::string_view b) {
  return a <= b ? std::pair{std::string(a), std::string(b)} : std::pair{std::string(b), std::string(a)};
}

struct HumanSimilarityTable {
  enum class Kind { kContinuous, kOrdinal } kind = Kind::kContinuous;
  std::vector<HumanPair> pairs;

  void validate() const {
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& p : pairs) {
      if (!seen.insert(pair_key(p.word_a, p.word_b)).second) {
        throw ValidationError("duplicate human pair (" + p.word_a + ", " + p.word_b + ")");
      }
      if (!std::isfinite(p.score)) throw ValidationError("non-finite human score for (" + p.word_a + ", " + p.word_b + ")");
      if (kind == Kind::kOrdinal && !p.bin) throw ValidationError("missing bin for (" + p.word_a + ", " + p.word_b + ")");
    }
  }
};

/// Parses `wordA<TAB>wordB<TAB>score|bin` lines. A leading header line whose
/// third field is neither numeric nor a bin name is skipped; blank lines and
/// lines starting with '#' are ignored. The table kind is inferred from the
/// first data row.
inline HumanSimilarityTable parse_human_table(std::string_view text) {
  HumanSimilarityTable t;
  bool kind_known = false;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (f.size() < 3) f = split_tokens(line);
    if (f.size() < 3) throw ValidationError("human table line " + std::to_string(line_no) + ": expected 3 fields");
    HumanPair p{f[0], f[1], 0.0, std::nullopt};
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), v);
    const bool numeric = ec == std::errc{} && ptr == f[2].data() + f[2].size();
    const auto bin = parse_bin(f[2]);
    if (!numeric && !bin) {
      if (!kind_known && t.pairs.empty() && line_no == 1) continue;  // header
      throw ValidationError("human table line " + std::to_string(line_no) + ": bad score '" + f[2] + "'");
    }
    const auto kind = bin ? HumanSimilarityTable::Kind::kOrdinal : HumanSimilarityTable::Kind::kContinuous;
    if (!kind_known) {
      t.kind = kind;
      kind_known = true;
    } else if (kind != t.kind) {
      throw ValidationError("human table line " + std::to_string(line_no) + ": mixes ordinal bins and scores");
    }
    if (bin) {
      p.bin = bin;
      p.score = static_cast<double>(*bin);
    } else {
      p.score = v;
    }
    t.pairs.push_back(std::move(p));
  }
  t.validate();
  return t;
}

inline HumanSimilarityTable read_human_table(const std::filesystem::path& path) {
  return parse_human_table(read_file(path));
}

inline std::string format_human_table(const HumanSimilarityTable& t) {
  std::string out;
  for (const auto& p : t.pairs) {
    out += p.word_a + "\t" + p.word_b + "\t";
    if (p.bin) {
      std::string b(to_string(*p.bin));
      for (auto& c : b) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      out += b;
    } else {
      std::ostringstream s;
      s.precision(17);
      s << p.score;
      out += s.str();
    }
    out += "\n";
  }
  return out;
}

}  // namespace expertlens
