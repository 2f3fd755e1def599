// expertlens: find concept-selective neurons in activation dumps and compare
// the resulting expert sets across concepts, checkpoints and human judgements.

#include <cstdlib>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "pipeline.hpp"

namespace el = expertlens;
namespace cli = expertlens::cli;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void print_issues(const std::vector<cli::ConfigIssue>& issues) { std::cerr << cli::ConfigError(issues).to_json().dump(2) << "\n"; }

void print_error(std::string_view kind, const std::string& message) {
  ojson e{{"errors", ojson::array({{{"kind", kind}, {"message", message}}})}};
  std::cerr << e.dump(2) << "\n";
}

void emit(const std::optional<fs::path>& out, const std::string& text) {
  if (out) {
    el::atomic_write(*out, text);
  } else {
    std::cout << text;
  }
}

void emit_json(const std::optional<fs::path>& out, const ojson& j) { emit(out, j.dump(2) + "\n"); }

el::NeuronMap map_from(const fs::path& p) {
  if (p.extension() == ".apv") return el::read_apv(p).map;
  return el::read_activation_dump(p).map;
}

// Looks up a concept's manifest within a directory or returns the file itself.
std::vector<el::ConceptManifest> manifests_from(const std::vector<fs::path>& paths) {
  std::vector<el::ConceptManifest> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      auto ms = cli::read_manifest_dir(p);
      out.insert(out.end(), ms.begin(), ms.end());
    } else {
      out.push_back(el::read_manifest(p));
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"expertlens: expert neurons for concepts"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "expertlens 0.1.0");
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (default EXPERTLENS_THREADS or all cores)");

  std::function<void()> action;

  // validate
  auto* validate = app.add_subcommand("validate", "check dumps, manifests or a run config");
  std::vector<fs::path> v_dumps, v_manifests;
  std::optional<fs::path> v_config;
  validate->add_option("--dump", v_dumps, "activation dump (.actd)");
  validate->add_option("--manifest", v_manifests, "concept manifest file or directory");
  validate->add_option("--config", v_config, "run config");
  validate->callback([&] {
    action = [&] {
      std::vector<cli::ConfigIssue> issues;
      for (const auto& d : v_dumps) {
        try {
          const auto dump = el::read_activation_dump(d);
          dump.validate();
          std::cout << d.string() << ": " << dump.n_sentences() << " sentences x " << dump.n_neurons() << " neurons\n";
        } catch (const std::exception& e) {
          issues.push_back({"dump", d.string(), e.what()});
        }
      }
      for (const auto& m : v_manifests) {
        try {
          for (const auto& man : manifests_from({m})) {
            man.validate();
            std::cout << man.concept_name << ": " << man.count(el::Label::kPositive) << " positive, "
                      << man.count(el::Label::kNegative) << " negative\n";
          }
        } catch (const std::exception& e) {
          issues.push_back({"manifest", m.string(), e.what()});
        }
      }
      if (v_config) {
        try {
          const auto cfg = cli::load_run_config(*v_config);
          auto more = cli::check_config(cfg);
          issues.insert(issues.end(), more.begin(), more.end());
          if (more.empty()) std::cout << v_config->string() << ": ok\n";
        } catch (const cli::ConfigError& e) {
          issues.insert(issues.end(), e.issues().begin(), e.issues().end());
        }
      }
      if (!issues.empty()) throw cli::ConfigError(issues);
    };
  });

  // score
  auto* score = app.add_subcommand("score", "AP of every neuron for one concept");
  fs::path s_dump, s_manifest, s_out;
  std::optional<fs::path> s_pool;
  std::size_t s_pos = 0, s_neg = 1000;
  std::uint64_t s_seed = 0;
  score->add_option("--dump", s_dump)->required();
  score->add_option("--manifest", s_manifest, "concept manifest")->required();
  score->add_option("--pool", s_pool, "directory of other concepts' manifests to draw negatives from");
  score->add_option("--pos-size", s_pos, "positives to sample (0 = all)");
  score->add_option("--neg-size", s_neg, "negatives to sample from the pool");
  score->add_option("--seed", s_seed);
  score->add_option("--out", s_out, "output .apv")->required();
  score->callback([&] {
    action = [&] {
      const auto target = el::read_manifest(s_manifest);
      std::vector<el::ConceptManifest> pool;
      if (s_pool) pool = cli::read_manifest_dir(*s_pool);
      if (target.count(el::Label::kNegative) == 0 && pool.size() < 2) {
        throw el::ValidationError("manifest '" + target.concept_name + "' has no negatives; pass --pool");
      }
      const auto m = el::make_scoring_manifest(target, pool, s_pos, s_neg, el::derive_key(s_seed, "scoring"));
      const auto dump = el::read_activation_dump(s_dump);
      const auto ap = el::score_all_neurons(dump, m, {el::resolve_threads(threads), 256});
      el::write_apv(ap, s_out);
    };
  });

  // experts
  auto* experts = app.add_subcommand("experts", "expert sets from an AP vector");
  std::vector<fs::path> e_ap;
  std::vector<double> e_taus;
  std::size_t e_k = 0;
  std::optional<fs::path> e_out;
  experts->add_option("--ap", e_ap, ".apv files")->required();
  experts->add_option("--tau", e_taus, "AP thresholds");
  experts->add_option("--top-k", e_k, "also emit the k best neurons");
  experts->add_option("--out", e_out);
  experts->callback([&] {
    action = [&] {
      if (e_taus.empty() && e_k == 0) e_taus = {0.5, 0.6, 0.7, 0.8, 0.9};
      std::vector<el::ExpertSet> sets;
      for (const auto& p : e_ap) {
        const auto ap = el::read_apv(p);
        for (double t : e_taus) sets.push_back(el::extract_experts(ap, t));
        if (e_k) sets.push_back(el::top_k_experts(ap, std::min<std::size_t>(e_k, ap.scores.size())));
      }
      emit_json(e_out, cli::expert_sets_to_json(sets));
    };
  });

  // similarity
  auto* similarity = app.add_subcommand("similarity", "pairwise concept similarity");
  std::vector<fs::path> m_ap;
  std::vector<std::string> m_methods;
  std::optional<fs::path> m_out;
  std::string m_form = "abs-deviation";
  similarity->add_option("--ap", m_ap, ".apv files, one per concept")->required();
  similarity->add_option("--method", m_methods, "jaccard:TAU, ap-cosine, negadj-cosine, sym-kl");
  similarity->add_option("--negadj-form", m_form, "abs-deviation or shifted");
  similarity->add_option("--out", m_out, "CSV output");
  similarity->callback([&] {
    action = [&] {
      if (m_methods.empty()) m_methods = {"jaccard:0.5", "ap-cosine", "negadj-cosine", "sym-kl"};
      const auto form = el::parse_negadj_form(m_form);
      std::vector<el::SimilarityMethod> methods;
      for (const auto& m : m_methods) {
        methods.push_back(cli::parse_method(m));
        if (methods.back().kind == el::SimilarityMethod::Kind::kEmbCosine) {
          throw el::ValidationError("embedding cosine needs embeddings; use `run`");
        }
      }
      std::vector<el::APVector> aps;
      for (const auto& p : m_ap) aps.push_back(el::read_apv(p));
      std::vector<el::SimilarityRecord> recs;
      for (std::size_t a = 0; a < aps.size(); ++a) {
        for (std::size_t b = a + 1; b < aps.size(); ++b) {
          for (const auto& m : methods) {
            double v = 0.0;
            switch (m.kind) {
              case el::SimilarityMethod::Kind::kJaccard:
                v = el::jaccard(el::extract_experts(aps[a], m.tau), el::extract_experts(aps[b], m.tau));
                break;
              case el::SimilarityMethod::Kind::kApCosine:
                v = el::ap_cosine(aps[a], aps[b]);
                break;
              case el::SimilarityMethod::Kind::kNegAdjCosine:
                v = el::negadj_cosine(aps[a], aps[b], form);
                break;
              case el::SimilarityMethod::Kind::kSymKl:
                v = el::symmetric_kl(aps[a], aps[b]);
                break;
              default:
                break;
            }
            recs.push_back({aps[a].concept_name, aps[b].concept_name, m, v, aps[a].model, aps[a].checkpoint});
          }
        }
      }
      emit(m_out, cli::similarity_csv(recs));
    };
  });

  // align
  auto* align = app.add_subcommand("align", "Spearman alignment with human similarity");
  fs::path a_sim, a_human;
  std::string a_method = "jaccard:0.5";
  std::size_t a_boot = 10000, a_perm = 10000;
  std::uint64_t a_seed = 0;
  double a_level = 0.95;
  bool a_strict = false;
  std::optional<fs::path> a_out;
  align->add_option("--similarity", a_sim, "similarity CSV")->required();
  align->add_option("--human", a_human, "human table (TSV)")->required();
  align->add_option("--method", a_method);
  align->add_option("--bootstrap", a_boot);
  align->add_option("--permutations", a_perm);
  align->add_option("--level", a_level);
  align->add_option("--seed", a_seed);
  align->add_flag("--require-all-pairs", a_strict, "fail when a human pair has no model value");
  align->add_option("--out", a_out);
  align->callback([&] {
    action = [&] {
      const auto recs = cli::read_similarity_csv(a_sim);
      const auto human = el::read_human_table(a_human);
      const unsigned t = el::resolve_threads(threads);
      el::AlignmentOptions opts{{a_boot, a_level, el::derive_key(a_seed, "align-ci"), t},
                                {a_perm, el::derive_key(a_seed, "align-p"), t},
                                a_strict};
      emit_json(a_out, el::to_json(el::align_with_humans(recs, human, cli::parse_method(a_method), opts)));
    };
  });

  // domains
  auto* domains = app.add_subcommand("domains", "shared domain cores against a random baseline");
  fs::path d_experts, d_domains;
  std::size_t d_reps = 1000;
  std::uint64_t d_seed = 0;
  double d_tau = 0.5, d_threshold = 0.05;
  std::optional<fs::path> d_out, d_dot;
  domains->add_option("--experts", d_experts, "expert sets JSON")->required();
  domains->add_option("--domains", d_domains, "domain definitions JSON")->required();
  domains->add_option("--tau", d_tau, "which threshold sets to use");
  domains->add_option("--replicates", d_reps);
  domains->add_option("--seed", d_seed);
  domains->add_option("--out", d_out);
  domains->add_option("--graph-dot", d_dot, "also write the concept graph");
  domains->add_option("--graph-threshold", d_threshold);
  domains->callback([&] {
    action = [&] {
      std::map<std::string, el::ExpertSet> sets;
      for (auto& s : cli::read_expert_sets(d_experts))
        if (s.rule == el::SelectionRule::threshold(d_tau)) sets[s.concept_name] = std::move(s);
      if (sets.empty()) throw el::ValidationError("no expert sets at tau " + std::to_string(d_tau));
      const auto specs = cli::read_domains(d_domains);
      const auto rep = el::random_domain_baseline(sets, specs, {d_reps, el::derive_key(d_seed, "domains"), el::resolve_threads(threads)});
      emit_json(d_out, el::to_json(rep));
      if (d_dot) {
        std::vector<std::string> names;
        std::map<std::string, std::string> dom;
        for (const auto& [n, s] : sets) names.push_back(n);
        for (const auto& d : specs) {
          for (const auto& c : d.specifics) dom[c] = d.name;
          dom[d.broader] = d.name;
        }
        const std::size_t n = names.size();
        std::vector<double> sim(n * n, 1.0);
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t b = a + 1; b < n; ++b) sim[a * n + b] = sim[b * n + a] = el::jaccard(sets[names[a]], sets[names[b]]);
        el::atomic_write(*d_dot, el::export_concept_graph(names, sim, d_threshold, dom).to_dot());
      }
    };
  });

  // layers
  auto* layers = app.add_subcommand("layers", "layer and sublayer distribution of expert sets");
  fs::path l_experts, l_map;
  std::optional<fs::path> l_out;
  layers->add_option("--experts", l_experts, "expert sets JSON")->required();
  layers->add_option("--map-from", l_map, ".apv or .actd carrying the neuron map")->required();
  layers->add_option("--out", l_out, "CSV output");
  layers->callback([&] {
    action = [&] {
      const auto map = map_from(l_map);
      std::vector<el::LayerDistribution> dists;
      for (const auto& s : cli::read_expert_sets(l_experts)) dists.push_back(el::layer_distribution(s, map));
      emit(l_out, el::layer_distribution_csv(dists));
    };
  });

  // folds
  auto* folds = app.add_subcommand("folds", "expert-set stability across resampled folds");
  fs::path f_dump, f_manifests;
  std::vector<std::string> f_concepts;
  el::FoldConfig f_cfg;
  std::uint64_t f_seed = 0;
  std::size_t f_boot = 1000;
  std::optional<fs::path> f_out, f_csv;
  folds->add_option("--dump", f_dump)->required();
  folds->add_option("--manifests", f_manifests, "directory of concept manifests")->required();
  folds->add_option("--concepts", f_concepts, "concepts to study (default all)");
  folds->add_option("--folds", f_cfg.folds);
  folds->add_option("--pos-size", f_cfg.pos_sizes);
  folds->add_option("--neg-size", f_cfg.neg_sizes);
  folds->add_option("--tau", f_cfg.taus);
  folds->add_option("--cross-pairs", f_cfg.cross_pairs);
  folds->add_option("--bootstrap", f_boot);
  folds->add_option("--seed", f_seed);
  folds->add_option("--out", f_out);
  folds->add_option("--csv", f_csv);
  folds->callback([&] {
    action = [&] {
      const auto dump = el::read_activation_dump(f_dump);
      const auto pools = cli::read_manifest_dir(f_manifests);
      if (f_concepts.empty())
        for (const auto& m : pools) f_concepts.push_back(m.concept_name);
      f_cfg.seed = el::derive_key(f_seed, "folds");
      f_cfg.threads = el::resolve_threads(threads);
      f_cfg.bootstrap = {f_boot, 0.95, el::derive_key(f_seed, "folds-ci"), f_cfg.threads};
      const auto rep = el::fold_stability(dump, pools, f_concepts, f_cfg);
      emit_json(f_out, el::to_json(rep));
      if (f_csv) el::atomic_write(*f_csv, el::stability_csv(rep));
    };
  });

  // checkpoints
  auto* checkpoints = app.add_subcommand("checkpoints", "expert-set overlap between consecutive checkpoints");
  std::vector<fs::path> c_files;
  std::optional<fs::path> c_out;
  checkpoints->add_option("--experts", c_files, "expert sets JSON per checkpoint, in training order")->required();
  checkpoints->add_option("--out", c_out, "CSV output");
  checkpoints->callback([&] {
    action = [&] {
      if (c_files.size() < 2) throw el::ValidationError("checkpoint overlap needs at least 2 files");
      std::vector<std::vector<el::ExpertSet>> per_file;
      for (const auto& f : c_files) per_file.push_back(cli::read_expert_sets(f));
      std::ostringstream csv;
      csv.precision(10);
      csv << "concept,rule,from,to,jaccard\n";
      for (const auto& s : per_file[0]) {
        std::vector<el::ExpertSet> seq{s};
        for (std::size_t i = 1; i < per_file.size(); ++i) {
          const auto it = std::find_if(per_file[i].begin(), per_file[i].end(), [&](const auto& o) {
            return o.concept_name == s.concept_name && o.rule == s.rule;
          });
          if (it == per_file[i].end()) {
            throw el::ValidationError(c_files[i].string() + ": no set for '" + s.concept_name + "' under the same rule");
          }
          seq.push_back(*it);
        }
        std::ostringstream rule;
        if (s.rule.kind == el::SelectionRule::Kind::kThreshold) {
          rule << "tau=" << s.rule.tau;
        } else {
          rule << "top" << s.rule.k;
        }
        for (const auto& step : el::checkpoint_overlap(seq))
          csv << s.concept_name << ',' << rule.str() << ',' << step.from << ',' << step.to << ',' << step.jaccard << '\n';
      }
      emit(c_out, csv.str());
    };
  });

  // plan
  auto* plan = app.add_subcommand("plan", "intervention plan for the top-k experts");
  fs::path p_ap, p_dump, p_manifest;
  std::size_t p_k = 500;
  std::optional<fs::path> p_out;
  plan->add_option("--ap", p_ap)->required();
  plan->add_option("--dump", p_dump)->required();
  plan->add_option("--manifest", p_manifest, "manifest whose positives define the fixed values")->required();
  plan->add_option("--k", p_k);
  plan->add_option("--out", p_out);
  plan->callback([&] {
    action = [&] {
      const auto ap = el::read_apv(p_ap);
      const auto dump = el::read_activation_dump(p_dump);
      emit_json(p_out, el::to_json(el::build_intervention_plan(ap, dump, el::read_manifest(p_manifest), p_k)));
    };
  });

  // genstats
  auto* genstats = app.add_subcommand("genstats", "concept-word prevalence in generated text");
  fs::path g_words, g_base, g_inter;
  std::optional<fs::path> g_pos, g_out;
  std::size_t g_perm = 10000;
  std::uint64_t g_seed = 0;
  genstats->add_option("--words", g_words, "candidate word list")->required();
  genstats->add_option("--baseline", g_base, "baseline generations, one per line")->required();
  genstats->add_option("--intervened", g_inter, "intervened generations, one per line")->required();
  genstats->add_option("--positives", g_pos, "positive sentences; their words are dropped from the list");
  genstats->add_option("--permutations", g_perm);
  genstats->add_option("--seed", g_seed);
  genstats->add_option("--out", g_out);
  genstats->callback([&] {
    action = [&] {
      auto words = el::read_word_list(g_words);
      ojson j;
      if (g_pos) {
        const auto pos = el::read_generations(*g_pos);
        words = el::filter_word_list(words, pos);
        j["ttr_positives"] = el::type_token_ratio(pos).mean;
      }
      if (words.size() < 8) std::cerr << "warning: only " << words.size() << " words left in the list\n";
      const auto base = el::read_generations(g_base);
      const auto inter = el::read_generations(g_inter);
      const auto rep = el::prevalence_delta(base, inter, words,
                                            {g_perm, el::derive_key(g_seed, "genstats"), el::resolve_threads(threads)});
      j["words"] = words;
      j["ttr_baseline"] = el::type_token_ratio(base).mean;
      j["ttr_intervened"] = el::type_token_ratio(inter).mean;
      j["prevalence"] = el::to_json(rep);
      emit_json(g_out, j);
    };
  });

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic study with planted experts");
  std::string y_preset;
  std::optional<fs::path> y_config;
  fs::path y_out;
  std::optional<std::uint64_t> y_seed;
  synth->add_option("--preset", y_preset, "paper-desk")->check(CLI::IsMember({"paper-desk"}));
  synth->add_option("--config", y_config, "synthetic world JSON");
  synth->add_option("--out", y_out)->required();
  synth->add_option("--seed", y_seed);
  synth->callback([&] {
    action = [&] {
      const unsigned t = el::resolve_threads(threads);
      if (!y_preset.empty()) {
        cli::write_desk_preset(y_out, y_seed.value_or(7), t);
        std::cout << "wrote " << (y_out / "desk.json").string() << "\n";
      } else if (y_config) {
        auto cfg = cli::synth_config_from_json(nlohmann::json::parse(el::read_file(*y_config)));
        if (y_seed) cfg.seed = *y_seed;
        cli::write_synth_world(el::SynthWorld(cfg), y_out, t);
      } else {
        throw el::ValidationError("synth needs --preset or --config");
      }
    };
  });

  // run
  auto* run = app.add_subcommand("run", "run the full analysis from a config");
  fs::path r_config;
  std::optional<fs::path> r_out;
  std::vector<std::string> r_stages;
  bool r_quiet = false;
  run->add_option("--config", r_config)->required();
  run->add_option("--out", r_out, "override output_dir");
  run->add_option("--stages", r_stages, "subset of stages (dependencies are added)");
  run->add_flag("--quiet", r_quiet);
  run->callback([&] {
    action = [&] {
      auto cfg = cli::load_run_config(r_config);
      if (r_out) cfg.output_dir = *r_out;
      if (!r_stages.empty()) {
        for (const auto& s : r_stages)
          if (std::find(cli::kAllStages.begin(), cli::kAllStages.end(), s) == cli::kAllStages.end()) {
            throw cli::ConfigError({{"stages", "", "unknown stage '" + s + "'"}});
          }
        cfg.stages = r_stages;
      }
      std::ostringstream sink;
      cli::run_pipeline(cfg, el::resolve_threads(threads), r_quiet ? static_cast<std::ostream&>(sink) : std::cerr);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (action) action();
  } catch (const cli::ConfigError& e) {
    print_issues(e.issues());
    return 2;
  } catch (const el::ValidationError& e) {
    print_error("validation", e.what());
    return 2;
  } catch (const el::IoError& e) {
    print_error("io", e.what());
    return 2;
  } catch (const el::AnalysisError& e) {
    print_error("analysis", e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    print_error("validation", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("error", e.what());
    return 1;
  }
  return 0;
}
