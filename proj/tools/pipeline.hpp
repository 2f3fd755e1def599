#pragma once

// Run configuration, report writers and the staged pipeline behind the
// `expertlens` command line tool.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "expertlens/expertlens.hpp"
#include "json.hpp"

namespace expertlens::cli {

namespace fs = std::filesystem;

struct Params {
  std::vector<double> taus{0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t pos_size = 400;
  std::size_t neg_size = 1000;
  std::size_t folds = 8;
  std::vector<std::size_t> fold_pos_sizes{400};
  std::vector<std::size_t> fold_neg_sizes{1000};
  std::size_t cross_pairs = 50;
  std::size_t bootstrap = 10000;
  std::size_t permutations = 10000;
  std::size_t baseline_replicates = 1000;
  std::size_t top_k = 500;
  double level = 0.95;
  double domain_tau = 0.5;
  double graph_tau = 0.5;
  double graph_threshold = 0.05;
  NegAdjForm negadj_form = NegAdjForm::kAbsDeviation;
};

struct CheckpointInput {
  std::string label;
  fs::path dump;
};

struct RunConfig {
  std::string model = "model";
  std::uint64_t seed = 0;
  fs::path output_dir;
  std::vector<CheckpointInput> checkpoints;  // in training order
  fs::path manifests_dir;
  std::vector<std::string> concepts;  // analysed concepts; empty means every manifest
  std::optional<fs::path> men;
  std::optional<fs::path> spp;
  std::optional<fs::path> domains;
  std::optional<fs::path> embeddings;
  std::optional<fs::path> generations_dir;
  std::vector<std::string> stages;  // empty means all
  Params params;
  std::uint64_t config_hash = 0;
};

struct ConfigIssue {
  std::string field;
  std::string path;
  std::string message;
};

/// Thrown when a configuration fails validation; carries every issue found.
class ConfigError : public ValidationError {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }
  nlohmann::ordered_json to_json() const;

 private:
  std::vector<ConfigIssue> issues_;
};

inline const std::vector<std::string> kAllStages{"score",  "experts",     "similarity", "align", "domains",
                                                 "layers", "checkpoints", "folds",      "plan",  "genstats"};

/// Relative paths resolve against `base_dir`. Throws ConfigError.
RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir);
RunConfig load_run_config(const fs::path& path);

/// Missing inputs, bad parameters; empty when the config is runnable.
std::vector<ConfigIssue> check_config(const RunConfig& cfg);

/// Stages to execute, closed under dependencies, in execution order.
std::vector<std::string> resolve_stages(const std::vector<std::string>& requested);

void run_pipeline(const RunConfig& cfg, unsigned threads, std::ostream& log);

// --- report files ---------------------------------------------------------------

struct ReportContext {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

void write_json_report(const fs::path& path, nlohmann::ordered_json body, const std::optional<ReportContext>& ctx);
void write_csv_report(const fs::path& path, const std::string& body, const std::optional<ReportContext>& ctx);

std::string file_stem_for(const std::string& concept_name);

nlohmann::ordered_json expert_sets_to_json(std::span<const ExpertSet> sets);
std::vector<ExpertSet> read_expert_sets(const fs::path& path);

std::string similarity_csv(std::span<const SimilarityRecord> records);
std::vector<SimilarityRecord> read_similarity_csv(const fs::path& path);

/// "jaccard:0.5", "JACCARD(0.5)", "ap-cosine", "negadj-cosine", "sym-kl", "emb-cosine:word".
SimilarityMethod parse_method(std::string_view s);

/// {"word": {"cat": [..], ...}, "sentence": {...}}
using Embeddings = std::map<std::string, std::map<std::string, std::vector<double>>>;
Embeddings read_embeddings(const fs::path& path);

std::vector<ConceptManifest> read_manifest_dir(const fs::path& dir);
std::vector<DomainSpec> read_domains(const fs::path& path);

/// Writes the small synthetic study used for smoke tests and demos: dumps for
/// three checkpoints, concept manifests, human tables, domains, embeddings,
/// generation files and a run config `desk.json`.
void write_desk_preset(const fs::path& dir, std::uint64_t seed, unsigned threads);

/// Writes an arbitrary synthetic world described by a JSON config.
void write_synth_world(const SynthWorld& world, const fs::path& dir, unsigned threads);
SynthConfig synth_config_from_json(const nlohmann::json& j);

}  // namespace expertlens::cli
