#include "pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace expertlens::cli {

namespace {

using ojson = nlohmann::ordered_json;

constexpr const char* kVersion = "0.1.0";

// Published real-model values, kept for side-by-side reading only.
ojson reference_values() {
  ojson j;
  j["men_inter_human_rho"] = 0.84;
  j["men_rho_tau_0_5_final"] = {{"pythia-70m", 0.70}, {"pythia-1b", 0.77}, {"pythia-12b", 0.79}};
  j["pythia_12b_143k_pct_shared"] = {{"observed", 2.24}, {"baseline", 0.01}};
  j["pythia_12b_143k_pct_broader"] = {{"observed", 58.45}, {"baseline", 5.81}};
  j["intervention_prevalence_delta_pp"] = 0.181;
  return j;
}

const std::map<std::string, std::vector<std::string>> kStageDeps{
    {"score", {}},
    {"experts", {"score"}},
    {"similarity", {"score", "experts"}},
    {"align", {"similarity"}},
    {"domains", {"experts"}},
    {"layers", {"experts", "score"}},
    {"checkpoints", {"experts"}},
    {"folds", {}},
    {"plan", {"score"}},
    {"genstats", {}},
};

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

}  // namespace

// --- config -------------------------------------------------------------------

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : ValidationError([&] {
        std::string msg = "invalid configuration";
        for (const auto& i : issues) msg += "\n  " + i.field + (i.path.empty() ? "" : " (" + i.path + ")") + ": " + i.message;
        return msg;
      }()),
      issues_(std::move(issues)) {}

nlohmann::ordered_json ConfigError::to_json() const {
  ojson arr = ojson::array();
  for (const auto& i : issues_) {
    ojson e;
    e["field"] = i.field;
    if (!i.path.empty()) e["path"] = i.path;
    e["message"] = i.message;
    arr.push_back(std::move(e));
  }
  return {{"errors", std::move(arr)}};
}

RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir) {
  std::vector<ConfigIssue> issues;
  RunConfig c;
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  auto field = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const nlohmann::json::exception& e) {
      issues.push_back({name, "", e.what()});
    } catch (const Error& e) {
      issues.push_back({name, "", e.what()});
    }
  };
  if (!j.is_object()) throw ConfigError({{"config", "", "top level must be a JSON object"}});

  field("model", [&] { c.model = j.value("model", std::string("model")); });
  field("seed", [&] { c.seed = j.value("seed", std::uint64_t{0}); });
  field("output_dir", [&] { c.output_dir = resolve(j.value("output_dir", std::string("report"))); });
  field("checkpoints", [&] {
    for (const auto& cp : j.at("checkpoints")) c.checkpoints.push_back({cp.at("label").get<std::string>(), resolve(cp.at("dump").get<std::string>())});
    if (c.checkpoints.empty()) throw ValidationError("at least one checkpoint required");
    std::set<std::string> labels;
    for (const auto& cp : c.checkpoints)
      if (!labels.insert(cp.label).second) throw ValidationError("duplicate checkpoint label '" + cp.label + "'");
  });
  field("manifests", [&] { c.manifests_dir = resolve(j.at("manifests").get<std::string>()); });
  field("concepts", [&] { c.concepts = j.value("concepts", std::vector<std::string>{}); });
  field("human", [&] {
    if (!j.contains("human")) return;
    const auto& h = j["human"];
    if (h.contains("men")) c.men = resolve(h["men"].get<std::string>());
    if (h.contains("spp")) c.spp = resolve(h["spp"].get<std::string>());
  });
  field("domains", [&] {
    if (j.contains("domains")) c.domains = resolve(j["domains"].get<std::string>());
  });
  field("embeddings", [&] {
    if (j.contains("embeddings")) c.embeddings = resolve(j["embeddings"].get<std::string>());
  });
  field("generations", [&] {
    if (j.contains("generations")) c.generations_dir = resolve(j["generations"].get<std::string>());
  });
  field("stages", [&] {
    c.stages = j.value("stages", std::vector<std::string>{});
    for (const auto& s : c.stages)
      if (!kStageDeps.count(s)) throw ValidationError("unknown stage '" + s + "'");
  });
  field("params", [&] {
    if (!j.contains("params")) return;
    const auto& p = j["params"];
    auto& q = c.params;
    q.taus = p.value("taus", q.taus);
    q.pos_size = p.value("pos_size", q.pos_size);
    q.neg_size = p.value("neg_size", q.neg_size);
    q.folds = p.value("folds", q.folds);
    q.fold_pos_sizes = p.value("fold_pos_sizes", q.fold_pos_sizes);
    q.fold_neg_sizes = p.value("fold_neg_sizes", q.fold_neg_sizes);
    q.cross_pairs = p.value("cross_pairs", q.cross_pairs);
    q.bootstrap = p.value("bootstrap", q.bootstrap);
    q.permutations = p.value("permutations", q.permutations);
    q.baseline_replicates = p.value("baseline_replicates", q.baseline_replicates);
    q.top_k = p.value("top_k", q.top_k);
    q.level = p.value("level", q.level);
    q.domain_tau = p.value("domain_tau", q.domain_tau);
    q.graph_tau = p.value("graph_tau", q.graph_tau);
    q.graph_threshold = p.value("graph_threshold", q.graph_threshold);
    if (p.contains("negadj_form")) q.negadj_form = parse_negadj_form(p["negadj_form"].get<std::string>());
  });
  if (!issues.empty()) throw ConfigError(std::move(issues));
  c.config_hash = fnv1a(j.dump());
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError({{"config", path.string(), "file not found"}});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({{"config", path.string(), e.what()}});
  }
  return parse_run_config(j, path.parent_path());
}

std::vector<ConfigIssue> check_config(const RunConfig& c) {
  std::vector<ConfigIssue> out;
  auto need_file = [&](const std::string& field, const fs::path& p) {
    if (!fs::is_regular_file(p)) out.push_back({field, p.string(), "file not found"});
  };
  auto need_dir = [&](const std::string& field, const fs::path& p) {
    if (!fs::is_directory(p)) out.push_back({field, p.string(), "directory not found"});
  };
  for (const auto& cp : c.checkpoints) need_file("checkpoints." + cp.label, cp.dump);
  need_dir("manifests", c.manifests_dir);
  if (c.men) need_file("human.men", *c.men);
  if (c.spp) need_file("human.spp", *c.spp);
  if (c.domains) need_file("domains", *c.domains);
  if (c.embeddings) need_file("embeddings", *c.embeddings);
  if (c.generations_dir) need_dir("generations", *c.generations_dir);
  if (fs::is_directory(c.manifests_dir)) {
    for (const auto& name : c.concepts) {
      const auto p = c.manifests_dir / (file_stem_for(name) + ".json");
      if (!fs::is_regular_file(p)) out.push_back({"concepts", p.string(), "no manifest for concept '" + name + "'"});
    }
  }
  const auto& q = c.params;
  if (q.taus.empty()) out.push_back({"params.taus", "", "tau grid is empty"});
  for (double t : q.taus)
    if (!(t > 0.0 && t < 1.0)) out.push_back({"params.taus", "", "tau " + fmt_double(t) + " outside (0,1)"});
  for (double t : {q.domain_tau, q.graph_tau})
    if (!(t > 0.0 && t < 1.0)) out.push_back({"params", "", "tau " + fmt_double(t) + " outside (0,1)"});
  if (q.pos_size == 0 || q.neg_size == 0) out.push_back({"params", "", "pos_size and neg_size must be positive"});
  if (q.folds < 2) out.push_back({"params.folds", "", "K must be at least 2"});
  if (q.bootstrap == 0 || q.permutations == 0 || q.baseline_replicates == 0) {
    out.push_back({"params", "", "bootstrap, permutations and baseline_replicates must be positive"});
  }
  if (q.top_k == 0) out.push_back({"params.top_k", "", "top_k must be positive"});
  if (!(q.level > 0.0 && q.level < 1.0)) out.push_back({"params.level", "", "level must be in (0,1)"});
  const auto stages = c.stages;
  auto wants = [&](const char* s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };
  if (wants("align") && !c.men && !c.spp) out.push_back({"human", "", "align stage needs a MEN or SPP table"});
  if (wants("genstats") && !c.generations_dir) out.push_back({"generations", "", "genstats stage needs a generations directory"});
  return out;
}

std::vector<std::string> resolve_stages(const std::vector<std::string>& requested) {
  std::set<std::string> want(requested.begin(), requested.end());
  if (want.empty()) want.insert(kAllStages.begin(), kAllStages.end());
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& s : std::vector<std::string>(want.begin(), want.end()))
      for (const auto& d : kStageDeps.at(s)) grew |= want.insert(d).second;
  }
  std::vector<std::string> out;
  for (const auto& s : kAllStages)
    if (want.count(s)) out.push_back(s);
  return out;
}

// --- file formats ---------------------------------------------------------------

void write_json_report(const fs::path& path, nlohmann::ordered_json body, const std::optional<ReportContext>& ctx) {
  ojson j;
  if (ctx) {
    j["config_hash"] = hex_id(ctx->config_hash);
    j["seed"] = ctx->seed;
  }
  for (auto& [k, v] : body.items()) j[k] = std::move(v);
  atomic_write(path, j.dump(2) + "\n");
}

void write_csv_report(const fs::path& path, const std::string& body, const std::optional<ReportContext>& ctx) {
  std::string out;
  if (ctx) out = "# config_hash=" + hex_id(ctx->config_hash) + " seed=" + std::to_string(ctx->seed) + "\n";
  atomic_write(path, out + body);
}

std::string file_stem_for(const std::string& concept_name) {
  std::string s;
  for (char ch : concept_name) {
    const auto u = static_cast<unsigned char>(ch);
    s += (std::isalnum(u) || ch == '-' || ch == '_' || ch == '.') ? ch : '_';
  }
  if (s.empty() || s[0] == '.') s = "_" + s;
  return s;
}

nlohmann::ordered_json expert_sets_to_json(std::span<const ExpertSet> sets) {
  ojson arr = ojson::array();
  for (const auto& s : sets) arr.push_back(to_json(s));
  return {{"sets", std::move(arr)}};
}

std::vector<ExpertSet> read_expert_sets(const fs::path& path) {
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    std::vector<ExpertSet> out;
    const auto& arr = j.is_array() ? j : j.at("sets");
    for (const auto& s : arr) out.push_back(expert_set_from_json(s));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string similarity_csv(std::span<const SimilarityRecord> records) {
  std::ostringstream out;
  out.precision(17);
  out << "concept_a,concept_b,method,value,model,checkpoint\n";
  for (const auto& r : records) {
    out << r.concept_a << ',' << r.concept_b << ',' << r.method.label() << ',' << r.value << ',' << r.model << ','
        << r.checkpoint << '\n';
  }
  return out.str();
}

SimilarityMethod parse_method(std::string_view s) {
  std::string t(s);
  for (auto& ch : t) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  std::replace(t.begin(), t.end(), '_', '-');
  std::string arg;
  if (auto open = t.find('('); open != std::string::npos && t.back() == ')') {
    arg = t.substr(open + 1, t.size() - open - 2);
    t = t.substr(0, open);
  } else if (auto colon = t.find(':'); colon != std::string::npos) {
    arg = t.substr(colon + 1);
    t = t.substr(0, colon);
  }
  if (t == "jaccard") {
    double tau = 0.5;
    if (!arg.empty()) {
      const auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), tau);
      if (ec != std::errc{} || ptr != arg.data() + arg.size()) throw ValidationError("bad Jaccard threshold '" + arg + "'");
    }
    return SimilarityMethod::jaccard(tau);
  }
  if (t == "ap-cosine") return SimilarityMethod::ap_cosine();
  if (t == "negadj-cosine") return SimilarityMethod::negadj_cosine();
  if (t == "sym-kl") return SimilarityMethod::sym_kl();
  if (t == "emb-cosine" && !arg.empty()) {
    // embedding kinds keep their original case
    const auto open = s.find_first_of("(:");
    std::string kind(s.substr(open + 1));
    if (!kind.empty() && kind.back() == ')') kind.pop_back();
    return SimilarityMethod::emb_cosine(kind);
  }
  throw ValidationError("unknown similarity method '" + std::string(s) +
                        "' (jaccard:TAU|ap-cosine|negadj-cosine|sym-kl|emb-cosine:KIND)");
}

std::vector<SimilarityRecord> read_similarity_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<SimilarityRecord> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.starts_with("concept_a,")) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() < 4) throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected >= 4 fields");
    SimilarityRecord r;
    r.concept_a = f[0];
    r.concept_b = f[1];
    r.method = parse_method(f[2]);
    try {
      r.value = std::stod(f[3]);
    } catch (const std::exception&) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": bad value '" + f[3] + "'");
    }
    if (f.size() > 4) r.model = f[4];
    if (f.size() > 5) r.checkpoint = f[5];
    out.push_back(std::move(r));
  }
  return out;
}

Embeddings read_embeddings(const fs::path& path) {
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    Embeddings out;
    for (const auto& [kind, table] : j.items()) {
      std::size_t dim = 0;
      for (const auto& [word, vec] : table.items()) {
        auto v = vec.get<std::vector<double>>();
        if (dim == 0) dim = v.size();
        if (v.size() != dim || dim == 0) throw ValidationError("embedding '" + kind + "/" + word + "' has wrong dimension");
        out[kind][word] = std::move(v);
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<ConceptManifest> read_manifest_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ConceptManifest> out;
  std::set<std::string> names;
  for (const auto& f : files) {
    out.push_back(read_manifest(f));
    if (!names.insert(out.back().concept_name).second) {
      throw ValidationError("concept '" + out.back().concept_name + "' has two manifests (" + f.string() + ")");
    }
  }
  if (out.empty()) throw ValidationError("no concept manifests in " + dir.string());
  return out;
}

std::vector<DomainSpec> read_domains(const fs::path& path) {
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    std::vector<DomainSpec> out;
    for (const auto& d : j.is_array() ? j : j.at("domains")) out.push_back(domain_from_json(d));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// --- pipeline ---------------------------------------------------------------------

namespace {

class Pipeline {
 public:
  Pipeline(const RunConfig& cfg, unsigned threads, std::ostream& log)
      : cfg_(cfg), threads_(threads), log_(log), ctx_{cfg.config_hash, cfg.seed} {}

  void run() {
    const auto stages = resolve_stages(cfg_.stages);
    load_inputs();
    for (const auto& s : stages) {
      log_ << "stage " << s << "\n";
      if (s == "score") score();
      if (s == "experts") experts();
      if (s == "similarity") similarity();
      if (s == "align") align();
      if (s == "domains") domains();
      if (s == "layers") layers();
      if (s == "checkpoints") checkpoints();
      if (s == "folds") folds();
      if (s == "plan") plan();
      if (s == "genstats") genstats();
    }
    write_run_manifest(stages);
  }

 private:
  // --- helpers ---
  fs::path out(const std::string& rel) const { return cfg_.output_dir / rel; }

  void json_report(const std::string& rel, ojson body) {
    write_json_report(out(rel), std::move(body), ctx_);
    outputs_.insert(rel);
  }
  void csv_report(const std::string& rel, const std::string& body) {
    write_csv_report(out(rel), body, ctx_);
    outputs_.insert(rel);
  }

  std::uint64_t seed(std::string_view tag) const { return derive_key(cfg_.seed, tag); }

  BootstrapOptions boot(std::uint64_t s) const { return {cfg_.params.bootstrap, cfg_.params.level, s, threads_}; }
  PermutationOptions perm(std::uint64_t s) const { return {cfg_.params.permutations, s, threads_}; }

  ActivationDump load_dump(std::size_t cp) const {
    const auto& in = cfg_.checkpoints[cp];
    ActivationDump d;
    try {
      d = read_activation_dump(in.dump);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(in.dump.string() + ": bad sidecar: " + e.what());
    } catch (const Error& e) {
      throw ValidationError(in.dump.string() + ": " + e.what());
    }
    d.validate();
    d.checkpoint = in.label;
    if (d.model.empty()) d.model = cfg_.model;
    return d;
  }

  void load_inputs() {
    manifests_ = read_manifest_dir(cfg_.manifests_dir);
    targets_ = cfg_.concepts;
    if (targets_.empty())
      for (const auto& m : manifests_) targets_.push_back(m.concept_name);
    std::set<std::string> stems;
    for (const auto& t : targets_) {
      const auto it = std::find_if(manifests_.begin(), manifests_.end(), [&](const auto& m) { return m.concept_name == t; });
      if (it == manifests_.end()) throw ValidationError("no manifest for concept '" + t + "'");
      if (!stems.insert(file_stem_for(t)).second) throw ValidationError("concept names collide as file names: '" + t + "'");
      scoring_.push_back(make_scoring_manifest(*it, manifests_, cfg_.params.pos_size, cfg_.params.neg_size, seed("scoring")));
    }
    if (cfg_.domains) domain_specs_ = read_domains(*cfg_.domains);
    for (const auto& d : domain_specs_) {
      for (const auto& c : d.specifics)
        if (!std::count(targets_.begin(), targets_.end(), c)) throw ValidationError("domain '" + d.name + "' names '" + c + "', which is not an analysed concept");
      if (!std::count(targets_.begin(), targets_.end(), d.broader)) throw ValidationError("domain '" + d.name + "' names '" + d.broader + "', which is not an analysed concept");
      for (const auto& c : d.specifics) domain_of_[c] = d.name;
      domain_of_[d.broader] = d.name;
    }
  }

  std::size_t index_of(const std::string& c) const {
    return static_cast<std::size_t>(std::find(targets_.begin(), targets_.end(), c) - targets_.begin());
  }

  const std::string& cp_label(std::size_t cp) const { return cfg_.checkpoints[cp].label; }

  // --- stages ---
  void score() {
    const std::size_t n_cp = cfg_.checkpoints.size();
    ap_.assign(n_cp, std::vector<APVector>(targets_.size()));
    for (std::size_t cp = 0; cp < n_cp; ++cp) {
      const auto dump = load_dump(cp);
      if (cp == 0) {
        map_ = dump.map;
      } else if (!(dump.map == map_)) {
        throw ValidationError(cfg_.checkpoints[cp].dump.string() + ": neuron map differs from checkpoint " + cp_label(0));
      }
      parallel_for(targets_.size(), threads_, [&](std::size_t c) { ap_[cp][c] = score_all_neurons(dump, scoring_[c], {1, 256}); });
      for (std::size_t c = 0; c < targets_.size(); ++c) {
        const std::string rel = "ap/" + file_stem_for(cp_label(cp)) + "/" + file_stem_for(targets_[c]) + ".apv";
        write_apv(ap_[cp][c], out(rel));
        outputs_.insert(rel);
        outputs_.insert(rel + ".json");
      }
      log_ << "  scored " << targets_.size() << " concepts at " << cp_label(cp) << "\n";
    }
  }

  void experts() {
    const auto& taus = cfg_.params.taus;
    sets_.assign(ap_.size(), std::vector<std::vector<ExpertSet>>(targets_.size()));
    std::vector<ExpertSet> all_threshold;
    ojson monotone = ojson::array();
    for (std::size_t cp = 0; cp < ap_.size(); ++cp) {
      std::vector<ExpertSet> flat;
      for (std::size_t c = 0; c < targets_.size(); ++c) {
        for (double tau : taus) sets_[cp][c].push_back(extract_experts(ap_[cp][c], tau));
        flat.insert(flat.end(), sets_[cp][c].begin(), sets_[cp][c].end());
        all_threshold.insert(all_threshold.end(), sets_[cp][c].begin(), sets_[cp][c].end());
        flat.push_back(top_k_experts(ap_[cp][c], std::min(cfg_.params.top_k, map_.size())));
      }
      json_report("experts/" + file_stem_for(cp_label(cp)) + ".json", expert_sets_to_json(flat));

      // nesting and emptiness along the tau grid
      std::vector<std::size_t> order(taus.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return taus[a] < taus[b]; });
      for (std::size_t k = 0; k < order.size(); ++k) {
        std::size_t empty = 0, not_nested = 0, growing = 0;
        for (std::size_t c = 0; c < targets_.size(); ++c) {
          const auto& s = sets_[cp][c][order[k]];
          empty += s.empty();
          if (k > 0) {
            const auto& prev = sets_[cp][c][order[k - 1]];
            not_nested += !std::includes(prev.ids.begin(), prev.ids.end(), s.ids.begin(), s.ids.end());
            growing += s.size() > prev.size();
          }
        }
        monotone.push_back({{"checkpoint", cp_label(cp)},
                            {"tau", taus[order[k]]},
                            {"n_concepts", targets_.size()},
                            {"n_empty", empty},
                            {"empty_fraction", static_cast<double>(empty) / static_cast<double>(targets_.size())},
                            {"not_nested", not_nested},
                            {"size_increases", growing}});
      }
    }
    const auto groups = set_size_stats(all_threshold, {{all_threshold.empty() ? cfg_.model : all_threshold[0].model, map_.size()}},
                                       boot(seed("set-size")));
    ojson arr = ojson::array();
    std::ostringstream csv;
    csv.precision(10);
    csv << "model,checkpoint,tau,n_sets,n_empty,mean_size,mean_log10_size,log_ci_lower,log_ci_upper,mean_scaled_size,"
           "mean_log10_scaled,scaled_ci_lower,scaled_ci_upper\n";
    auto opt = [](const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); };
    for (const auto& g : groups) {
      ojson jg;
      jg["model"] = g.model;
      jg["checkpoint"] = g.checkpoint;
      jg["tau"] = g.tau;
      jg["n_sets"] = g.n_sets;
      jg["n_empty"] = g.n_empty;
      jg["mean_size"] = g.mean_size;
      jg["mean_log10_size"] = opt(g.mean_log10_size);
      jg["log_ci"] = g.log_ci ? to_json(*g.log_ci) : ojson(nullptr);
      jg["mean_scaled_size"] = g.mean_scaled_size;
      jg["mean_log10_scaled"] = opt(g.mean_log10_scaled);
      jg["scaled_ci"] = g.scaled_ci ? to_json(*g.scaled_ci) : ojson(nullptr);
      arr.push_back(std::move(jg));
      auto cell = [&](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); };
      csv << g.model << ',' << g.checkpoint << ',' << g.tau << ',' << g.n_sets << ',' << g.n_empty << ',' << g.mean_size
          << ',' << cell(g.mean_log10_size) << ',' << (g.log_ci ? fmt_double(g.log_ci->lower) : "") << ','
          << (g.log_ci ? fmt_double(g.log_ci->upper) : "") << ',' << g.mean_scaled_size << ','
          << cell(g.mean_log10_scaled) << ',' << (g.scaled_ci ? fmt_double(g.scaled_ci->lower) : "") << ','
          << (g.scaled_ci ? fmt_double(g.scaled_ci->upper) : "") << '\n';
    }
    // size-vs-tau slope per checkpoint over the mean log sizes
    ojson slopes = ojson::array();
    for (std::size_t cp = 0; cp < ap_.size(); ++cp) {
      std::vector<double> x, y;
      for (const auto& g : groups)
        if (g.checkpoint == cp_label(cp) && g.mean_log10_size) x.push_back(g.tau), y.push_back(*g.mean_log10_size);
      ojson js{{"checkpoint", cp_label(cp)}, {"slope", nullptr}};
      if (x.size() >= 2) {
        try {
          js["slope"] = ols_slope(x, y);
        } catch (const Error&) {
        }
      }
      slopes.push_back(std::move(js));
    }
    json_report("experts/set_sizes.json",
                {{"n_neurons", map_.size()}, {"groups", std::move(arr)}, {"log10_size_slope", std::move(slopes)},
                 {"nesting", std::move(monotone)}});
    csv_report("experts/set_sizes.csv", csv.str());
  }

  void similarity() {
    Embeddings emb;
    if (cfg_.embeddings) emb = read_embeddings(*cfg_.embeddings);
    records_.assign(ap_.size(), {});
    const auto& taus = cfg_.params.taus;
    for (std::size_t cp = 0; cp < ap_.size(); ++cp) {
      auto& recs = records_[cp];
      for (std::size_t a = 0; a < targets_.size(); ++a) {
        for (std::size_t b = a + 1; b < targets_.size(); ++b) {
          auto add = [&](SimilarityMethod m, double v) {
            recs.push_back({targets_[a], targets_[b], std::move(m), v, cfg_.model, cp_label(cp)});
          };
          for (std::size_t t = 0; t < taus.size(); ++t) {
            add(SimilarityMethod::jaccard(taus[t]), jaccard(sets_[cp][a][t], sets_[cp][b][t]));
          }
          const auto &pa = ap_[cp][a], &pb = ap_[cp][b];
          add(SimilarityMethod::ap_cosine(), ap_cosine(pa, pb));
          add(SimilarityMethod::negadj_cosine(), negadj_cosine(pa, pb, cfg_.params.negadj_form));
          add(SimilarityMethod::sym_kl(), symmetric_kl(pa, pb));
          for (const auto& [kind, table] : emb) {
            const auto ia = table.find(targets_[a]), ib = table.find(targets_[b]);
            if (ia != table.end() && ib != table.end()) add(SimilarityMethod::emb_cosine(kind), embedding_cosine(ia->second, ib->second));
          }
        }
      }
      csv_report("similarity/" + file_stem_for(cp_label(cp)) + ".csv", similarity_csv(recs));
    }
  }

  std::vector<SimilarityMethod> methods_in(const std::vector<SimilarityRecord>& recs) const {
    std::vector<SimilarityMethod> out;
    for (const auto& r : recs)
      if (std::find(out.begin(), out.end(), r.method) == out.end()) out.push_back(r.method);
    return out;
  }

  void align() {
    std::optional<HumanSimilarityTable> men, spp;
    if (cfg_.men) men = read_human_table(*cfg_.men);
    if (cfg_.spp) spp = read_human_table(*cfg_.spp);
    if (!men && !spp) {
      log_ << "  no human tables configured; skipping\n";
      return;
    }
    std::ostringstream csv;
    csv.precision(10);
    csv << "checkpoint,table,method,rho,ci_lower,ci_upper,p_value,n_pairs,n_missing\n";
    for (std::size_t cp = 0; cp < ap_.size(); ++cp) {
      ojson body;
      body["checkpoint"] = cp_label(cp);
      for (const auto& [name, table] : {std::pair{"men", &men}, std::pair{"spp", &spp}}) {
        if (!*table) continue;
        ojson reports = ojson::array();
        for (const auto& m : methods_in(records_[cp])) {
          const auto label = m.label();
          AlignmentOptions opts{boot(derive_key(cfg_.seed, "align-ci", name, cp, label)),
                                perm(derive_key(cfg_.seed, "align-p", name, cp, label)), false};
          try {
            const auto r = align_with_humans(records_[cp], **table, m, opts);
            reports.push_back(to_json(r));
            csv << cp_label(cp) << ',' << name << ',' << label << ',' << r.rho << ',' << r.ci.lower << ',' << r.ci.upper
                << ',' << r.p_value << ',' << r.n_pairs << ',' << r.n_missing << '\n';
          } catch (const AnalysisError& e) {
            reports.push_back({{"method", label}, {"error", e.what()}});
          }
        }
        body[name] = std::move(reports);
        if ((*table)->kind == HumanSimilarityTable::Kind::kOrdinal) body[std::string(name) + "_bins"] = bin_analysis(cp, **table, name);
      }
      json_report("align/" + file_stem_for(cp_label(cp)) + ".json", std::move(body));
    }
    csv_report("align/summary.csv", csv.str());
  }

  // Group Jaccard overlap by relatedness bin: sliding-difference contrasts on
  // the bin means plus adjacent-bin permutation tests.
  ojson bin_analysis(std::size_t cp, const HumanSimilarityTable& table, std::string_view name) {
    ojson out = ojson::array();
    for (const auto& m : methods_in(records_[cp])) {
      if (m.kind != SimilarityMethod::Kind::kJaccard) continue;
      std::map<std::pair<std::string, std::string>, double> value;
      for (const auto& r : records_[cp])
        if (r.method == m) value[pair_key(r.concept_a, r.concept_b)] = r.value;
      std::map<SimilarityBin, std::vector<double>> groups;
      std::size_t missing = 0;
      for (const auto& p : table.pairs) {
        const auto it = value.find(pair_key(p.word_a, p.word_b));
        if (it == value.end() || !p.bin) {
          ++missing;
          continue;
        }
        groups[*p.bin].push_back(it->second);
      }
      ojson jm;
      jm["method"] = m.label();
      jm["n_missing"] = missing;
      std::vector<std::string> levels;
      std::vector<double> means;
      std::vector<const std::vector<double>*> members;
      ojson jl = ojson::array();
      for (const auto& [bin, vals] : groups) {
        levels.emplace_back(to_string(bin));
        means.push_back(mean(vals));
        members.push_back(&vals);
        jl.push_back({{"bin", to_string(bin)}, {"n", vals.size()}, {"mean", means.back()}});
      }
      jm["levels"] = std::move(jl);
      if (levels.size() >= 2) {
        const auto coding = sliding_difference_contrasts(levels);
        const auto beta = contrast_estimates(coding, means);
        jm["intercept"] = beta[0];
        ojson jc = ojson::array();
        for (std::size_t k = 0; k + 1 < levels.size(); ++k) {
          const auto t = permutation_test(*members[k + 1], *members[k],
                                          perm(derive_key(cfg_.seed, "bins", name, cp, m.label(), k)));
          jc.push_back({{"from", levels[k]}, {"to", levels[k + 1]}, {"estimate", beta[k + 1]}, {"p_value", t.p_value}});
        }
        jm["contrasts"] = std::move(jc);
      }
      out.push_back(std::move(jm));
    }
    return out;
  }

  void domains() {
    const double tau = cfg_.params.domain_tau;
    std::ostringstream csv;
    csv.precision(10);
    csv << "checkpoint,domain,core_size,pct_shared,baseline_shared_mean,p_shared,pct_broader,baseline_broader_mean,p_broader\n";
    for (std::size_t cp = 0; cp < ap_.size(); ++cp) {
      std::map<std::string, ExpertSet> sets;
      for (std::size_t c = 0; c < targets_.size(); ++c) sets[targets_[c]] = extract_experts(ap_[cp][c], tau);
      if (!domain_specs_.empty()) {
        const auto rep = random_domain_baseline(
            sets, domain_specs_, {cfg_.params.baseline_replicates, derive_key(cfg_.seed, "domains", cp), threads_});
        json_report("domains/" + file_stem_for(cp_label(cp)) + ".json", to_json(rep));
        auto cell = [](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); };
        for (const auto& d : rep.domains) {
          csv << cp_label(cp) << ',' << d.domain << ',' << d.core.size() << ',' << d.pct_shared << ','
              << cell(d.baseline_shared.mean) << ',' << d.p_shared << ',' << cell(d.pct_broader) << ','
              << cell(d.baseline_broader.mean) << ',' << cell(d.p_broader) << '\n';
        }
      }
      // concept graph from the pairwise Jaccard matrix
      const std::size_t n = targets_.size();
      std::vector<double> sim(n * n, 1.0);
      std::map<std::string, ExpertSet> gsets;
      for (std::size_t c = 0; c < n; ++c) gsets[targets_[c]] = extract_experts(ap_[cp][c], cfg_.params.graph_tau);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) sim[a * n + b] = sim[b * n + a] = jaccard(gsets[targets_[a]], gsets[targets_[b]]);
      const auto g = export_concept_graph(targets_, sim, cfg_.params.graph_threshold, domain_of_);
      const std::string stem = "graph/" + file_stem_for(cp_label(cp));
      atomic_write(out(stem + ".dot"), g.to_dot());
      outputs_.insert(stem + ".dot");
      json_report(stem + ".json", g.to_node_link());
    }
    if (!domain_specs_.empty()) csv_report("domains/summary.csv", csv.str());
  }

  void layers() {
    const auto& taus = cfg_.params.taus;
    for (std::size_t cp = 0; cp < ap_.size(); ++cp) {
      std::vector<LayerDistribution> dists;
      for (std::size_t c = 0; c < targets_.size(); ++c)
        for (std::size_t t = 0; t < taus.size(); ++t) dists.push_back(layer_distribution(sets_[cp][c][t], map_));
      csv_report("layers/" + file_stem_for(cp_label(cp)) + ".csv", layer_distribution_csv(dists));

      ojson body;
      body["checkpoint"] = cp_label(cp);
      const double tau = cfg_.params.domain_tau;
      ojson location = nullptr;
      ojson hists = ojson::array();
      if (!domain_specs_.empty()) {
        std::vector<LayerDistribution> broad, specific;
        for (const auto& d : domain_specs_) {
          broad.push_back(layer_distribution(extract_experts(ap_[cp][index_of(d.broader)], tau), map_));
          for (const auto& s : d.specifics) specific.push_back(layer_distribution(extract_experts(ap_[cp][index_of(s)], tau), map_));
          const auto h = ap_histograms_shared(ap_[cp][index_of(d.specifics[0])], ap_[cp][index_of(d.specifics[1])], tau);
          hists.push_back({{"domain", d.name}, {"concept_a", d.specifics[0]}, {"concept_b", d.specifics[1]}, {"histograms", to_json(h)}});
        }
        try {
          const auto cmp = compare_layer_location(broad, specific, perm(derive_key(cfg_.seed, "layer-location", cp)));
          location = {{"tau", tau},
                      {"n_broader", cmp.n_a},
                      {"n_specific", cmp.n_b},
                      {"mean_layer_difference", cmp.test.statistic},
                      {"p_value", cmp.test.p_value}};
        } catch (const AnalysisError& e) {
          location = {{"tau", tau}, {"error", e.what()}};
        }
      }
      body["broader_vs_specific"] = std::move(location);
      body["ap_histograms"] = std::move(hists);
      json_report("layers/" + file_stem_for(cp_label(cp)) + ".json", std::move(body));
    }
  }

  void checkpoints() {
    if (ap_.size() < 2) {
      log_ << "  one checkpoint only; skipping\n";
      return;
    }
    const auto& taus = cfg_.params.taus;
    ojson series = ojson::array();
    std::ostringstream csv;
    csv.precision(10);
    csv << "concept,tau,from,to,jaccard\n";
    std::vector<std::vector<double>> sums(taus.size(), std::vector<double>(ap_.size() - 1, 0.0));
    for (std::size_t c = 0; c < targets_.size(); ++c) {
      for (std::size_t t = 0; t < taus.size(); ++t) {
        std::vector<ExpertSet> seq;
        for (std::size_t cp = 0; cp < ap_.size(); ++cp) seq.push_back(sets_[cp][c][t]);
        const auto steps = checkpoint_overlap(seq);
        ojson js = ojson::array();
        for (std::size_t i = 0; i < steps.size(); ++i) {
          js.push_back({{"from", steps[i].from}, {"to", steps[i].to}, {"jaccard", steps[i].jaccard}});
          csv << targets_[c] << ',' << taus[t] << ',' << steps[i].from << ',' << steps[i].to << ',' << steps[i].jaccard << '\n';
          sums[t][i] += steps[i].jaccard;
        }
        series.push_back({{"concept", targets_[c]}, {"tau", taus[t]}, {"steps", std::move(js)}});
      }
    }
    ojson means = ojson::array();
    for (std::size_t t = 0; t < taus.size(); ++t)
      for (std::size_t i = 0; i + 1 < ap_.size(); ++i)
        means.push_back({{"tau", taus[t]},
                         {"from", cp_label(i)},
                         {"to", cp_label(i + 1)},
                         {"mean_jaccard", sums[t][i] / static_cast<double>(targets_.size())}});
    json_report("checkpoints.json", {{"mean", std::move(means)}, {"series", std::move(series)}});
    csv_report("checkpoints.csv", csv.str());
  }

  void folds() {
    const auto dump = load_dump(cfg_.checkpoints.size() - 1);
    FoldConfig fc;
    fc.pos_sizes = cfg_.params.fold_pos_sizes;
    fc.neg_sizes = cfg_.params.fold_neg_sizes;
    fc.folds = cfg_.params.folds;
    fc.taus = cfg_.params.taus;
    fc.cross_pairs = cfg_.params.cross_pairs;
    fc.seed = seed("folds");
    fc.threads = threads_;
    fc.bootstrap = boot(seed("folds-ci"));
    const auto rep = fold_stability(dump, manifests_, targets_, fc);
    auto body = to_json(rep);
    body["checkpoint"] = cp_label(cfg_.checkpoints.size() - 1);
    json_report("folds.json", std::move(body));
    csv_report("folds.csv", stability_csv(rep));
  }

  void plan() {
    const std::size_t last = cfg_.checkpoints.size() - 1;
    const auto dump = load_dump(last);
    const std::size_t k = std::min(cfg_.params.top_k, map_.size());
    for (std::size_t c = 0; c < targets_.size(); ++c) {
      const auto p = build_intervention_plan(ap_[last][c], dump, scoring_[c], k);
      json_report("plans/" + file_stem_for(targets_[c]) + ".json", to_json(p));
    }
  }

  void genstats() {
    if (!cfg_.generations_dir) {
      log_ << "  no generations directory configured; skipping\n";
      return;
    }
    const auto& dir = *cfg_.generations_dir;
    ojson arr = ojson::array();
    for (const auto& c : targets_) {
      const auto stem = dir / file_stem_for(c);
      auto with = [&](const char* ext) {
        auto p = stem;
        p += ext;
        return p;
      };
      if (!fs::exists(with(".words.txt")) || !fs::exists(with(".baseline.txt")) || !fs::exists(with(".intervened.txt"))) continue;
      const auto candidates = read_word_list(with(".words.txt"));
      const auto base = read_generations(with(".baseline.txt"));
      const auto inter = read_generations(with(".intervened.txt"));
      ojson jc;
      jc["concept"] = c;
      jc["candidates"] = candidates.size();
      auto words = candidates;
      if (fs::exists(with(".positives.txt"))) {
        const auto pos = read_generations(with(".positives.txt"));
        words = filter_word_list(candidates, pos);
        jc["ttr_positives"] = type_token_ratio(pos).mean;
      }
      if (words.size() < 8) log_ << "  warning: only " << words.size() << " unseen words for '" << c << "'\n";
      auto rep = prevalence_delta(base, inter, words, perm(derive_key(cfg_.seed, "genstats", c)));
      rep.concept_name = c;
      jc["words"] = words;
      jc["ttr_baseline"] = type_token_ratio(base).mean;
      jc["ttr_intervened"] = type_token_ratio(inter).mean;
      jc["prevalence"] = to_json(rep);
      arr.push_back(std::move(jc));
    }
    json_report("genstats.json", {{"concepts", std::move(arr)}});
  }

  void write_run_manifest(const std::vector<std::string>& stages) {
    ojson m;
    m["tool"] = "expertlens";
    m["version"] = kVersion;
    m["config_hash"] = hex_id(cfg_.config_hash);
    m["seed"] = cfg_.seed;
    m["model"] = cfg_.model;
    ojson cps = ojson::array();
    for (const auto& cp : cfg_.checkpoints) cps.push_back(cp.label);
    m["checkpoints"] = std::move(cps);
    m["concepts"] = targets_;
    m["stages"] = stages;
    const auto& q = cfg_.params;
    m["params"] = {{"taus", q.taus},
                   {"pos_size", q.pos_size},
                   {"neg_size", q.neg_size},
                   {"folds", q.folds},
                   {"fold_pos_sizes", q.fold_pos_sizes},
                   {"fold_neg_sizes", q.fold_neg_sizes},
                   {"cross_pairs", q.cross_pairs},
                   {"bootstrap", q.bootstrap},
                   {"permutations", q.permutations},
                   {"baseline_replicates", q.baseline_replicates},
                   {"top_k", q.top_k},
                   {"level", q.level},
                   {"domain_tau", q.domain_tau},
                   {"graph_tau", q.graph_tau},
                   {"graph_threshold", q.graph_threshold},
                   {"negadj_form", to_string(q.negadj_form)}};
    ojson files = ojson::array();
    for (const auto& rel : outputs_) files.push_back({{"path", rel}, {"fnv1a", hex_id(fnv1a(read_file(out(rel))))}});
    m["outputs"] = std::move(files);
    m["reference_values"] = reference_values();
    atomic_write(out("run_manifest.json"), m.dump(2) + "\n");
  }

  const RunConfig& cfg_;
  unsigned threads_;
  std::ostream& log_;
  ReportContext ctx_;
  std::set<std::string> outputs_;

  std::vector<ConceptManifest> manifests_;
  std::vector<std::string> targets_;
  std::vector<ConceptManifest> scoring_;
  std::vector<DomainSpec> domain_specs_;
  std::map<std::string, std::string> domain_of_;
  NeuronMap map_;
  std::vector<std::vector<APVector>> ap_;                        // [cp][concept]
  std::vector<std::vector<std::vector<ExpertSet>>> sets_;        // [cp][concept][tau]
  std::vector<std::vector<SimilarityRecord>> records_;           // [cp]
};

}  // namespace

void run_pipeline(const RunConfig& cfg, unsigned threads, std::ostream& log) {
  if (auto issues = check_config(cfg); !issues.empty()) throw ConfigError(std::move(issues));
  Pipeline(cfg, std::max(1u, threads), log).run();
}

// --- synthetic fixtures ------------------------------------------------------------

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.model = j.value("model", c.model);
    if (j.contains("layers")) {
      c.map = NeuronMap::uniform(j.at("layers").get<std::uint16_t>(), j.value("mlp_units", 192u), j.value("attn_units", 64u));
    }
    c.concepts = j.value("concepts", c.concepts);
    c.experts_per_concept = j.value("experts_per_concept", c.experts_per_concept);
    c.shift = j.value("shift", c.shift);
    for (const auto& s : j.value("sharing", nlohmann::json::array()))
      c.sharing.push_back({s.at("from").get<std::string>(), s.at("to").get<std::string>(), s.at("fraction").get<double>()});
    for (const auto& d : j.value("domains", nlohmann::json::array())) {
      c.domains.push_back({d.at("name").get<std::string>(), d.at("specifics").get<std::vector<std::string>>(),
                           d.at("broader").get<std::string>(), d.value("core_size", std::size_t{0}),
                           d.value("broader_core_fraction", 1.0)});
    }
    c.pool_size = j.value("pool_size", c.pool_size);
    c.n_background = j.value("n_background", c.n_background);
    c.background_pool_size = j.value("background_pool_size", c.background_pool_size);
    c.pos_size = j.value("pos_size", c.pos_size);
    c.neg_size = j.value("neg_size", c.neg_size);
    c.checkpoints = j.value("checkpoints", c.checkpoints);
    c.drift = j.value("drift", c.drift);
    if (j.contains("pooling")) c.pooling = parse_pooling(j["pooling"].get<std::string>());
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synthetic config: ") + e.what());
  }
  c.validate();
  return c;
}

void write_synth_world(const SynthWorld& world, const fs::path& dir, unsigned threads) {
  const auto& cfg = world.config();
  for (std::size_t cp = 0; cp < cfg.checkpoints.size(); ++cp) {
    auto dump = world.full_dump(cp, threads);
    write_activation_dump(dump, dir / "dumps" / (file_stem_for(cfg.checkpoints[cp]) + ".actd"));
  }
  for (const auto& m : world.manifests()) write_manifest(m, dir / "manifests" / (file_stem_for(m.concept_name) + ".json"));
  atomic_write(dir / "ground_truth.json", world.ground_truth().dump(1) + "\n");
}

void write_desk_preset(const fs::path& dir, std::uint64_t seed, unsigned threads) {
  SynthConfig cfg;
  cfg.model = "synthetic-desk";
  cfg.map = NeuronMap::uniform(4, 288, 64);
  cfg.experts_per_concept = 40;
  cfg.shift = 4.0;
  const std::vector<std::pair<std::string, std::vector<std::string>>> groups{
      {"animal", {"cat", "dog", "horse", "cheetah"}},
      {"food", {"apple", "bread", "cheese", "rice"}},
      {"vehicle", {"car", "bus", "train", "bicycle"}},
      {"clothing", {"jacket", "shirt", "shoe", "hat"}},
      {"tool", {"hammer", "saw", "drill", "wrench"}},
  };
  for (const auto& [broader, specifics] : groups) cfg.domains.push_back({broader + "-domain", specifics, broader, 8, 0.75});
  cfg.pool_size = 120;
  cfg.n_background = 10;
  cfg.background_pool_size = 60;
  cfg.pos_size = 100;
  cfg.neg_size = 300;
  cfg.checkpoints = {"1k", "10k", "143k"};
  cfg.drift = 0.1;
  cfg.seed = seed;
  const SynthWorld world(cfg);
  write_synth_world(world, dir, threads);

  std::vector<std::string> targets(world.target_concepts().begin(), world.target_concepts().end());
  std::map<std::string, std::pair<std::size_t, bool>> where;  // concept -> (domain, is_broader)
  for (std::size_t d = 0; d < groups.size(); ++d) {
    for (const auto& s : groups[d].second) where[s] = {d, false};
    where[groups[d].first] = {d, true};
  }

  // human tables derived from the planted structure, with noise
  CounterRng rng(derive_key(seed, "desk-humans"));
  HumanSimilarityTable men, spp;
  spp.kind = HumanSimilarityTable::Kind::kOrdinal;
  for (std::size_t a = 0; a < targets.size(); ++a) {
    for (std::size_t b = a + 1; b < targets.size(); ++b) {
      const auto [da, ba] = where[targets[a]];
      const auto [db, bb] = where[targets[b]];
      double base = 10.0;
      std::optional<SimilarityBin> bin;
      if (da == db && !ba && !bb) {
        base = 40.0;
        bin = SimilarityBin::kStrong;
      } else if (da == db) {
        base = 32.0;
        bin = SimilarityBin::kWeak;
      } else if (rng.below(5) == 0) {
        bin = SimilarityBin::kUnrelated;
      }
      const double score = std::round((base + 12.0 * (rng.uniform() - 0.5)) * 100.0) / 100.0;
      men.pairs.push_back({targets[a], targets[b], score, std::nullopt});
      if (bin) spp.pairs.push_back({targets[a], targets[b], static_cast<double>(*bin), bin});
    }
  }
  atomic_write(dir / "men.tsv", format_human_table(men));
  atomic_write(dir / "spp.tsv", format_human_table(spp));

  ojson doms = ojson::array();
  for (const auto& d : world.domain_specs()) doms.push_back(to_json(d));
  atomic_write(dir / "domains.json", ojson{{"domains", doms}}.dump(1) + "\n");

  // word embeddings: domain centroid plus noise
  constexpr std::size_t kDim = 16;
  std::vector<std::vector<double>> centroids(groups.size(), std::vector<double>(kDim));
  for (auto& c : centroids)
    for (auto& v : c) v = rng.normal();
  ojson words = ojson::object();
  for (const auto& t : targets) {
    std::vector<double> v(kDim);
    for (std::size_t i = 0; i < kDim; ++i) v[i] = centroids[where[t].first][i] + 0.8 * rng.normal();
    for (auto& x : v) x = std::round(x * 1e6) / 1e6;
    words[t] = v;
  }
  atomic_write(dir / "embeddings.json", ojson{{"word", words}}.dump(1) + "\n");

  // generations for two concepts: the intervened arm mentions list words more often
  const std::vector<std::string> filler{"the", "a", "and", "was", "day", "time", "went", "saw", "little", "there",
                                        "upon", "once", "they", "very", "house", "walk", "found", "big", "old", "new"};
  for (const std::string c : {"cat", "car"}) {
    std::vector<std::string> list;
    for (int i = 0; i < 30; ++i) list.push_back(c + "word" + std::to_string(i));
    std::string wl, pos, base, inter;
    for (const auto& w : list) wl += w + "\n";
    for (int line = 0; line < 40; ++line) {
      for (int t = 0; t < 20; ++t) pos += (t ? " " : "") + (rng.below(10) == 0 ? list[rng.below(5)] : filler[rng.below(filler.size())]);
      pos += "\n";
    }
    auto arm = [&](std::string& outs, std::uint64_t rate) {
      for (int line = 0; line < 200; ++line) {
        for (int t = 0; t < 60; ++t) {
          outs += t ? " " : "";
          outs += rng.below(1000) < rate ? list[5 + rng.below(25)] : filler[rng.below(filler.size())];
        }
        outs += "\n";
      }
    };
    arm(base, 2);
    arm(inter, 12);
    atomic_write(dir / "generations" / (c + ".words.txt"), wl);
    atomic_write(dir / "generations" / (c + ".positives.txt"), pos);
    atomic_write(dir / "generations" / (c + ".baseline.txt"), base);
    atomic_write(dir / "generations" / (c + ".intervened.txt"), inter);
  }

  ojson cps = ojson::array();
  for (const auto& cp : cfg.checkpoints) cps.push_back({{"label", cp}, {"dump", "dumps/" + file_stem_for(cp) + ".actd"}});
  ojson run;
  run["model"] = cfg.model;
  run["seed"] = seed;
  run["output_dir"] = "report";
  run["checkpoints"] = std::move(cps);
  run["manifests"] = "manifests";
  run["concepts"] = targets;
  run["human"] = {{"men", "men.tsv"}, {"spp", "spp.tsv"}};
  run["domains"] = "domains.json";
  run["embeddings"] = "embeddings.json";
  run["generations"] = "generations";
  run["params"] = {{"taus", {0.5, 0.6, 0.7, 0.8, 0.9}},
                   {"pos_size", 100},
                   {"neg_size", 300},
                   {"folds", 8},
                   {"fold_pos_sizes", {50, 100}},
                   {"fold_neg_sizes", {300}},
                   {"cross_pairs", 50},
                   {"bootstrap", 1000},
                   {"permutations", 1000},
                   {"baseline_replicates", 1000},
                   {"top_k", 40},
                   {"graph_threshold", 0.02}};
  atomic_write(dir / "desk.json", run.dump(2) + "\n");
}

}  // namespace expertlens::cli
