#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "profkg/checkpoint.hpp"
#include "profkg/config.hpp"
#include "profkg/dataset.hpp"
#include "profkg/encoder.hpp"
#include "profkg/evaluator.hpp"
#include "profkg/profiler.hpp"
#include "profkg/split.hpp"
#include "profkg/trainer.hpp"

namespace profkg {

// Per-role switches for the profile-removal ablations.
struct ProfileDrops {
  bool users = false;
  bool items = false;
  bool entities = false;
};

struct RunSettings {
  Config config;  // effective settings (file overlaid with flags)
  std::uint64_t seed = 0;
  SplitRatios ratios;
  double interaction_ratio = 1.0;  // fraction of each user's training pairs kept
  TrainConfig train;
  EncoderSpec encoder;
  ProfileMode profile_mode = ProfileMode::template_only;
  LlmClientConfig llm;
  ProfilerOptions profiler;
  std::string profiles_path;    // existing profile store; empty means generate template profiles
  std::string embeddings_path;  // existing profile matrix; empty means encode the store
  std::string out_dir = "run";
  ProfileDrops drops;
  EvalOptions eval;
};

// Keys that never influence results and therefore stay out of the config hash.
inline const std::vector<std::string> kUnhashedKeys{"out_dir", "wall_time", "llm.api_key_env", "mask_validation"};

inline ProfileDrops parse_drops(const std::string& list, TrainConfig& train) {
  ProfileDrops d;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = std::string(detail::trim(item));
    if (item.empty() || item == "none") continue;
    if (item == "user") d.users = true;
    else if (item == "item") d.items = true;
    else if (item == "entity") d.entities = true;
    else if (item == "removal") train.model.fusion = FusionMode::add_without_inverse;
    else if (item == "matching") train.lambda_pair = 0.0;
    else if (item == "profiles") {
      train.model.lambda_p = 0.0;
      train.lambda_pair = 0.0;
    } else {
      throw Error(ErrorCode::config_invalid,
                  "unknown drop '" + item + "' (expected user, item, entity, removal, matching or profiles)");
    }
  }
  return d;
}

inline RunSettings settings_from_config(const Config& c) {
  RunSettings s;
  s.config = c;
  s.seed = c.get_u64("seed", 0);
  s.ratios.train = c.get_double("split.train", s.ratios.train);
  s.ratios.validation = c.get_double("split.validation", s.ratios.validation);
  s.ratios.test = c.get_double("split.test", s.ratios.test);
  s.interaction_ratio = c.get_double("interaction_ratio", 1.0);

  TrainConfig& t = s.train;
  t.seed = s.seed;
  t.model.dim = c.get_size("dim", t.model.dim);
  t.model.layers = c.get_size("layers", t.model.layers);
  t.model.hidden = c.get_size("hidden", t.model.hidden);
  t.model.lambda_p = c.get_double("lambda_p", t.model.lambda_p);
  try {
    t.model.fusion = parse_fusion_mode(c.get_string("fusion", to_string(t.model.fusion)));
  } catch (const Error& e) {
    throw Error(ErrorCode::config_invalid, e.what());
  }
  t.model.frozen_attention = c.get_bool("frozen_attention", false);
  t.model.inject_relations = c.get_bool("inject_relations", false);
  t.lambda_pair = c.get_double("lambda_pair", t.lambda_pair);
  t.sample_ratio = c.get_double("q", t.sample_ratio);
  t.rounds = c.get_size("rounds", t.rounds);
  t.learning_rate = c.get_double("learning_rate", t.learning_rate);
  t.batch_size = c.get_size("batch_size", t.batch_size);
  t.max_epochs = c.get_size("max_epochs", t.max_epochs);
  t.patience = c.get_size("patience", t.patience);
  t.weight_decay = c.get_double("weight_decay", t.weight_decay);
  t.record_wall_time = c.get_bool("wall_time", false);

  s.encoder.dim = c.get_size("profile_dim", s.encoder.dim);
  s.encoder.hash_seed = c.get_u64("hash_seed", s.encoder.hash_seed);
  t.model.profile_dim = s.encoder.dim;
  s.profiles_path = c.get_path("profiles");
  s.embeddings_path = c.get_path("embeddings");
  if (!s.embeddings_path.empty()) {
    s.encoder.kind = EncoderKind::external_file;
    s.encoder.path = s.embeddings_path;
  }

  const std::string mode = c.get_string("profile_mode", "template");
  if (mode == "template") s.profile_mode = ProfileMode::template_only;
  else if (mode == "llm") s.profile_mode = ProfileMode::llm;
  else throw Error(ErrorCode::config_invalid, "profile_mode must be template or llm, got '" + mode + "'");
  s.llm.endpoint_url = c.get_string("llm.endpoint");
  s.llm.model_name = c.get_string("llm.model");
  s.llm.api_key_env = c.get_string("llm.api_key_env", s.llm.api_key_env);
  s.llm.max_retries = static_cast<int>(c.get_size("llm.max_retries", 3));
  s.llm.max_parallel_requests = static_cast<int>(c.get_size("llm.max_parallel", 4));
  s.llm.request_timeout_seconds = c.get_double("llm.timeout_seconds", 60.0);
  s.llm.backoff_base_seconds = c.get_double("llm.backoff_seconds", 1.0);
  s.profiler.seed = s.seed;
  s.profiler.limits.max_reviews = c.get_size("max_reviews", s.profiler.limits.max_reviews);
  s.profiler.limits.max_related = c.get_size("max_related", s.profiler.limits.max_related);
  s.profiler.max_failure_rate = c.get_double("llm.max_failure_rate", s.profiler.max_failure_rate);

  s.out_dir = c.get_string("out_dir", s.out_dir);
  s.drops = parse_drops(c.get_string("drop", ""), t);
  s.eval.mask_validation = c.get_bool("mask_validation", false);
  return s;
}

// A `dataset = path` key points at a separate manifest; otherwise the config itself is one.
inline Dataset load_dataset(const Config& c) {
  if (auto path = c.get("dataset")) {
    const std::string resolved = c.get_path("dataset");
    return ingest(manifest_from_config(Config::load(resolved)));
  }
  return ingest(manifest_from_config(c));
}

inline std::string config_hash(const RunSettings& s) { return s.config.hash(kUnhashedKeys); }

inline InteractionSplit make_split(const KnowledgeGraph& g, const RunSettings& s) {
  InteractionSplit split = split_interactions(g, s.ratios, s.seed);
  if (s.interaction_ratio < 1.0) split.train = downsample_interactions(split.train, s.interaction_ratio, s.seed);
  return split;
}

// Template or LLM profiles over the training graph, or a previously written store.
inline ProfileStore obtain_profiles(const KnowledgeGraph& train_graph, const Dataset& ds, const RunSettings& s,
                                    std::vector<ProfileFailure>* failures = nullptr) {
  if (!s.profiles_path.empty()) return load_profiles(train_graph, s.profiles_path);
  std::optional<LlmClientConfig> client;
  if (s.profile_mode == ProfileMode::llm) {
    if (s.llm.endpoint_url.empty())
      throw Error(ErrorCode::config_missing, "llm mode needs llm.endpoint and llm.model");
    client = s.llm;
  }
  ProfileRun run = generate_all_profiles(train_graph, ds.templates, ds.reviews, s.profile_mode, client, s.profiler);
  if (failures) *failures = run.failures;
  return std::move(run.store);
}

inline Matrix<float> profile_matrix(const KnowledgeGraph& g, const ProfileStore* store, const RunSettings& s) {
  if (s.encoder.kind == EncoderKind::external_file) {
    Matrix<float> m = read_matrix(s.encoder.path);
    if (static_cast<std::size_t>(m.rows()) != g.entity_count())
      throw Error(ErrorCode::dimension_mismatch, s.encoder.path + " has " + std::to_string(m.rows()) +
                                                     " rows, expected " + std::to_string(g.entity_count()));
    if (!m.allFinite()) throw Error(ErrorCode::non_finite_value, s.encoder.path);
    if (s.encoder.normalize) normalize_rows(m);
    return m;
  }
  if (!store) throw Error(ErrorCode::missing_dependency_profile, "no profile store to encode");
  return encode_profiles(*store, s.encoder).rows;
}

// Relation "profiles" are encodings of the relation labels.
inline Matrix<float> relation_profile_matrix(const KnowledgeGraph& g, const EncoderSpec& spec) {
  EncoderSpec text = spec;
  text.kind = EncoderKind::hashed_bag_of_words;
  Matrix<float> m(static_cast<Eigen::Index>(g.relation_count()), static_cast<Eigen::Index>(spec.dim));
  for (std::size_t r = 0; r < g.relation_count(); ++r)
    m.row(static_cast<Eigen::Index>(r)) = encode_text(g.relation_label(relation_at(r)), text).transpose();
  return m;
}

inline ProfileInputs<float> make_inputs(const KnowledgeGraph& g, Matrix<float> profiles, const RunSettings& s) {
  ProfileInputs<float> in;
  in.entity_profiles = std::move(profiles);
  if (s.train.model.inject_relations) in.relation_profiles = relation_profile_matrix(g, s.encoder);
  if (s.drops.users || s.drops.items || s.drops.entities) {
    in.scale = Vector<float>::Ones(static_cast<Eigen::Index>(g.entity_count()));
    for (std::size_t i = 0; i < g.entity_count(); ++i) {
      const Role r = g.role(entity_at(i));
      if ((r == Role::user && s.drops.users) || (r == Role::item && s.drops.items) ||
          (r == Role::auxiliary && s.drops.entities))
        in.scale(static_cast<Eigen::Index>(i)) = 0.0f;
    }
  }
  return in;
}

struct Prepared {
  InteractionSplit split;
  KnowledgeGraph train_graph;
  ProfileInputs<float> inputs;
  TrainConfig train;  // profile_dim follows the profile matrix
};

inline Prepared prepare(const Dataset& ds, const RunSettings& s) {
  Prepared p;
  p.split = make_split(ds.graph, s);
  p.train_graph = ds.graph.with_interactions(p.split.train);
  std::optional<ProfileStore> store;
  if (s.encoder.kind != EncoderKind::external_file) store = obtain_profiles(p.train_graph, ds, s);
  p.inputs = make_inputs(ds.graph, profile_matrix(ds.graph, store ? &*store : nullptr, s), s);
  p.train = s.train;
  p.train.model.profile_dim = static_cast<std::size_t>(p.inputs.entity_profiles.cols());
  return p;
}

struct ExperimentResult {
  FitResult<float> fit;
  MetricReport validation;
  MetricReport test;
};

inline ExperimentResult run_experiment(const Dataset& ds, const RunSettings& s, const Prepared& p,
                                       const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  ExperimentResult r;
  r.fit = fit<float>(ds.graph, p.split, p.inputs, p.train, on_epoch);
  const PropagationOutput<float> out = propagate(r.fit.best_params, p.train.model, p.inputs, p.train_graph);
  EvalOptions val = s.eval;
  val.target = EvalTarget::validation;
  r.validation = evaluate(out.z, p.train_graph, p.split, val);
  EvalOptions test = s.eval;
  test.target = EvalTarget::test;
  r.test = evaluate(out.z, p.train_graph, p.split, test);
  r.validation.config_hash = r.test.config_hash = config_hash(s);
  return r;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  out << text;
}

inline std::string out_path(const RunSettings& s, const std::string& name) {
  return (std::filesystem::path(s.out_dir) / name).string();
}

}  // namespace profkg
