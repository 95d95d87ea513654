#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "profkg/checkpoint.hpp"
#include "profkg/pipeline.hpp"
#include "profkg/synthetic.hpp"

namespace profkg {

namespace detail {

struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
};

inline void add_common(CLI::App* cmd, CommonFlags& f, bool config_required = true) {
  auto* c = cmd->add_option("-c,--config", f.config, "flat key = value config file");
  if (config_required) c->required();
  cmd->add_option("--set", f.sets, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", f.seed, "root seed");
  cmd->add_option("--out", f.out, "output directory (config key out_dir)");
}

// flag > file > default: file keys first, then explicit flags on top.
inline Config effective_config(const CommonFlags& f, const Config& extra = {}) {
  Config c = Config::load(f.config);
  Config flags;
  for (const std::string& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(ErrorCode::usage, "--set expects key=value, got '" + kv + "'");
    flags.set(std::string(trim(std::string_view(kv).substr(0, eq))),
              std::string(trim(std::string_view(kv).substr(eq + 1))));
  }
  flags.overlay(extra);
  if (f.seed) flags.set("seed", std::to_string(*f.seed));
  if (!f.out.empty()) flags.set("out_dir", f.out);
  c.overlay(flags);
  return c;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty()) out.emplace_back(t);
  return out;
}

inline std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

inline std::string result_row(const std::string& name, const ExperimentResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-30s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %6zu\n", name.c_str(),
                r.validation.recall_at(20), r.test.recall_at(10), r.test.recall_at(20), r.test.recall_at(40),
                r.test.ndcg_at(10), r.test.ndcg_at(20), r.test.ndcg_at(40), r.fit.best_epoch);
  return buf;
}

inline std::string result_header(const std::string& first) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-30s %8s %8s %8s %8s %8s %8s %8s %6s\n", first.c_str(), "val_r@20", "r@10",
                "r@20", "r@40", "n@10", "n@20", "n@40", "best");
  return buf;
}

inline nlohmann::json result_json(const std::string& key, const std::string& name, const ExperimentResult& r) {
  nlohmann::json j = to_json(r.test);
  j[key] = name;
  j["val_recall@20"] = r.validation.recall_at(20);
  j["best_epoch"] = r.fit.best_epoch;
  return j;
}

}  // namespace detail

// Returns the process exit status: 0 ok, 1 usage, 2 config, 3 data, 4 runtime.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"profile-enriched knowledge graph recommender"};
  app.require_subcommand(1);

  detail::CommonFlags ingest_f;
  auto* ingest_cmd = app.add_subcommand("ingest", "load a dataset manifest and print graph statistics");
  detail::add_common(ingest_cmd, ingest_f);

  SyntheticSpec synth_spec;
  std::string synth_out, synth_name = "synthetic";
  auto* synth_cmd = app.add_subcommand("synth", "write a planted-genre synthetic dataset");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--users", synth_spec.n_users);
  synth_cmd->add_option("--items", synth_spec.n_items);
  synth_cmd->add_option("--genres", synth_spec.n_genres);
  synth_cmd->add_option("--per-user", synth_spec.interactions_per_user);
  synth_cmd->add_option("--in-genre", synth_spec.in_genre_probability);
  synth_cmd->add_option("--review-prob", synth_spec.review_probability);
  synth_cmd->add_option("--seed", synth_spec.seed);
  synth_cmd->add_option("--name", synth_name);

  detail::CommonFlags profile_f;
  std::string profile_mode;
  auto* profile_cmd = app.add_subcommand("profile", "generate entity profiles over the training graph");
  detail::add_common(profile_cmd, profile_f);
  profile_cmd->add_option("--mode", profile_mode, "template or llm")->check(CLI::IsMember({"template", "llm"}));

  detail::CommonFlags embed_f;
  auto* embed_cmd = app.add_subcommand("embed", "encode a profile store into a profile matrix");
  detail::add_common(embed_cmd, embed_f);

  detail::CommonFlags train_f;
  std::optional<std::size_t> train_epochs;
  auto* train_cmd = app.add_subcommand("train", "fit the model and write a checkpoint and training log");
  detail::add_common(train_cmd, train_f);
  train_cmd->add_option("--epochs", train_epochs, "max epochs (config key max_epochs)");

  detail::CommonFlags eval_f;
  std::string eval_target = "test";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate the checkpoint in the output directory");
  detail::add_common(eval_cmd, eval_f);
  eval_cmd->add_option("--target", eval_target)->check(CLI::IsMember({"test", "validation"}));

  detail::CommonFlags ablate_f;
  std::string ablate_fusion, ablate_drop;
  auto* ablate_cmd = app.add_subcommand("ablate", "train one variant per fusion mode or dropped component");
  detail::add_common(ablate_cmd, ablate_f);
  ablate_cmd->add_option("--fusion", ablate_fusion, "comma list of fusion modes, or 'all'");
  ablate_cmd->add_option("--drop", ablate_drop,
                         "comma list from user,item,entity,removal,matching,profiles; one variant each");

  detail::CommonFlags sweep_f;
  std::string sweep_ratios = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  auto* sweep_cmd = app.add_subcommand("sweep", "train at downsampled interaction ratios");
  detail::add_common(sweep_cmd, sweep_f);
  sweep_cmd->add_option("--ratios", sweep_ratios, "comma list of ratios in (0,1]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: Usage: " << detail::one_line(e.what()) << '\n';
    return 1;
  }

  try {
    if (*synth_cmd) {
      const auto files = write_synthetic(generate_synthetic(synth_spec), synth_out, synth_name);
      for (const std::string& f : files) out << f << '\n';
      return 0;
    }

    if (*ingest_cmd) {
      const Config c = detail::effective_config(ingest_f);
      const Dataset ds = load_dataset(c);
      out << format_stats(ds.manifest.name, ds.graph.stats());
      return 0;
    }

    if (*profile_cmd) {
      Config extra;
      if (!profile_mode.empty()) extra.set("profile_mode", profile_mode);
      const Config c = detail::effective_config(profile_f, extra);
      RunSettings s = settings_from_config(c);
      s.profiles_path.clear();
      if (s.profile_mode == ProfileMode::llm) s.profiler.checkpoint_path = out_path(s, "profiles.partial.jsonl");
      const Dataset ds = load_dataset(c);
      const InteractionSplit split = make_split(ds.graph, s);
      const KnowledgeGraph train_graph = ds.graph.with_interactions(split.train);
      std::filesystem::create_directories(s.out_dir);
      std::vector<ProfileFailure> failures;
      const ProfileStore store = obtain_profiles(train_graph, ds, s, &failures);
      const std::string path = out_path(s, "profiles.jsonl");
      save_profiles(store, train_graph, path);
      if (!s.profiler.checkpoint_path.empty()) std::filesystem::remove(s.profiler.checkpoint_path);
      out << "wrote " << store.size() << " profiles to " << path << " (provenance="
          << (s.profile_mode == ProfileMode::llm ? "llm" : "template") << ", fallbacks=" << failures.size() << ")\n";
      return 0;
    }

    if (*embed_cmd) {
      const Config c = detail::effective_config(embed_f);
      RunSettings s = settings_from_config(c);
      const Dataset ds = load_dataset(c);
      const std::string src = s.profiles_path.empty() ? out_path(s, "profiles.jsonl") : s.profiles_path;
      const ProfileStore store = load_profiles(ds.graph, src);
      s.encoder.kind = EncoderKind::hashed_bag_of_words;
      const ProfileEmbeddingMatrix m = encode_profiles(store, s.encoder);
      write_matrix(out_path(s, "profiles.spke"), m.rows);
      write_index(out_path(s, "profiles.index"), ds.graph.entity_vocabulary().labels());
      out << "wrote " << m.rows.rows() << "x" << m.rows.cols() << " matrix (" << m.encoder_tag << ") to "
          << out_path(s, "profiles.spke") << '\n';
      return 0;
    }

    if (*train_cmd) {
      Config extra;
      if (train_epochs) extra.set("max_epochs", std::to_string(*train_epochs));
      const Config c = detail::effective_config(train_f, extra);
      const RunSettings s = settings_from_config(c);
      const Dataset ds = load_dataset(c);
      const Prepared p = prepare(ds, s);
      std::filesystem::create_directories(s.out_dir);
      std::ofstream log(out_path(s, "train_log.jsonl"), std::ios::binary);
      if (!log) throw Error(ErrorCode::io_error, "cannot write " + out_path(s, "train_log.jsonl"));
      const FitResult<float> r = fit<float>(ds.graph, p.split, p.inputs, p.train, [&](const EpochRecord& e) {
        log << to_json(e, p.train.early_stopping_k).dump() << '\n' << std::flush;
      });
      save_checkpoint(out_path(s, "checkpoint"), r.best_params, config_hash(s), s.seed);
      out << "epochs " << r.log.size() << ", best epoch " << r.best_epoch << ", val recall@"
          << p.train.early_stopping_k << " " << r.best_metric << '\n';
      out << "checkpoint " << out_path(s, "checkpoint") << '\n';
      return 0;
    }

    if (*eval_cmd) {
      const Config c = detail::effective_config(eval_f);
      const RunSettings s = settings_from_config(c);
      const Dataset ds = load_dataset(c);
      const Prepared p = prepare(ds, s);
      CheckpointManifest manifest;
      const ModelParams<float> params = load_checkpoint(out_path(s, "checkpoint"), &manifest);
      if (manifest.config_hash != config_hash(s))
        err << "warning: checkpoint config hash " << manifest.config_hash << " differs from " << config_hash(s)
            << '\n';
      const PropagationOutput<float> z = propagate(params, p.train.model, p.inputs, p.train_graph);
      EvalOptions options = s.eval;
      options.target = eval_target == "validation" ? EvalTarget::validation : EvalTarget::test;
      MetricReport report = evaluate(z.z, p.train_graph, p.split, options);
      report.config_hash = config_hash(s);
      out << format_report(report);
      nlohmann::json j = to_json(report);
      j["target"] = eval_target;
      write_text(out_path(s, "metrics_" + eval_target + ".jsonl"), j.dump() + "\n");
      return 0;
    }

    if (*ablate_cmd) {
      const Config base = detail::effective_config(ablate_f);
      const Dataset ds = load_dataset(base);
      std::vector<std::pair<std::string, Config>> variants{{"full", base}};
      std::vector<std::string> fusions = detail::split_list(ablate_fusion);
      if (fusions.size() == 1 && fusions[0] == "all") {
        fusions.clear();
        for (FusionMode m : kAllFusionModes) fusions.emplace_back(to_string(m));
      }
      for (const std::string& f : fusions) {
        Config v = base;
        v.set("fusion", f);
        variants.emplace_back("fusion=" + f, v);
      }
      for (const std::string& d : detail::split_list(ablate_drop)) {
        Config v = base;
        v.set("drop", d);
        variants.emplace_back("drop=" + d, v);
      }
      std::string records;
      out << detail::result_header("variant");
      for (const auto& [name, cfg] : variants) {
        const RunSettings s = settings_from_config(cfg);
        const ExperimentResult r = run_experiment(ds, s, prepare(ds, s));
        out << detail::result_row(name, r) << std::flush;
        records += detail::result_json("variant", name, r).dump() + "\n";
      }
      write_text(out_path(settings_from_config(base), "ablation.jsonl"), records);
      return 0;
    }

    if (*sweep_cmd) {
      const Config base = detail::effective_config(sweep_f);
      const Dataset ds = load_dataset(base);
      std::string records;
      out << detail::result_header("ratio");
      for (const std::string& ratio : detail::split_list(sweep_ratios)) {
        Config v = base;
        v.set("interaction_ratio", ratio);
        const RunSettings s = settings_from_config(v);
        const ExperimentResult r = run_experiment(ds, s, prepare(ds, s));
        out << detail::result_row(ratio, r) << std::flush;
        records += detail::result_json("ratio", ratio, r).dump() + "\n";
      }
      write_text(out_path(settings_from_config(base), "sweep.jsonl"), records);
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << detail::one_line(e.what()) << '\n';
    return static_cast<int>(e.category());
  } catch (const nlohmann::json::exception& e) {
    err << "error: ParseError: " << detail::one_line(e.what()) << '\n';
    return static_cast<int>(ErrorCategory::data);
  } catch (const std::exception& e) {
    err << "error: " << detail::one_line(e.what()) << '\n';
    return static_cast<int>(ErrorCategory::runtime);
  }
  return 1;
}

}  // namespace profkg
