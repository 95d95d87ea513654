#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "profkg/llm_client.hpp"
#include "profkg/profiles.hpp"
#include "profkg/prompt.hpp"

namespace profkg {

enum class ProfileMode { template_only, llm };

using Completer = std::function<std::string(const PromptBundle&)>;

struct ProfilerOptions {
  PromptLimits limits;
  std::uint64_t seed = 0;
  // A stage whose LLM failure fraction exceeds this aborts the run.
  double max_failure_rate = 0.5;
  // LLM mode: successful completions are appended here and skipped on a rerun.
  std::string checkpoint_path;
};

struct ProfileFailure {
  EntityId entity;
  std::string message;
};

struct ProfileRun {
  ProfileStore store;
  std::vector<ProfileFailure> failures;
  std::size_t requests = 0;
  std::size_t resumed = 0;
};

namespace detail {

inline std::vector<EntityId> stage_entities(const KnowledgeGraph& g, Role role) {
  std::vector<EntityId> out;
  for (std::size_t i = 0; i < g.entity_count(); ++i)
    if (g.role(entity_at(i)) == role) out.push_back(entity_at(i));
  return out;
}

inline ProfileStore load_checkpoint(const KnowledgeGraph& g, const std::string& path) {
  if (path.empty() || !std::filesystem::exists(path)) return ProfileStore(g.entity_count());
  return load_profiles(g, path, /*tolerate_partial_last_line=*/true);
}

}  // namespace detail

// Profiles every entity bottom-up: items, then auxiliary entities, then users. Each
// stage finishes before the next starts; within a stage, LLM requests run with
// bounded parallelism and results are stored in entity-id order.
inline ProfileRun generate_all_profiles(const KnowledgeGraph& g, const TemplateSet& tset,
                                        const std::vector<Review>& reviews, ProfileMode mode,
                                        const std::optional<LlmClientConfig>& client,
                                        const ProfilerOptions& options = {}, Completer completer = {}) {
  if (mode == ProfileMode::llm && !client)
    throw Error(ErrorCode::config_missing, "llm profiling mode requires an LLM client configuration");
  if (mode == ProfileMode::llm && !completer) {
    LlmClientConfig cfg = *client;
    completer = [cfg](const PromptBundle& b) { return llm_complete(cfg, b); };
  }

  const ProfileContext ctx(g, reviews);
  ProfileRun run;
  run.store = ProfileStore(g.entity_count());
  ProfileStore resumed = mode == ProfileMode::llm ? detail::load_checkpoint(g, options.checkpoint_path)
                                                  : ProfileStore(g.entity_count());
  std::ofstream checkpoint;
  if (mode == ProfileMode::llm && !options.checkpoint_path.empty())
    checkpoint.open(options.checkpoint_path, std::ios::app | std::ios::binary);
  std::mutex mu;

  for (Role stage : {Role::item, Role::auxiliary, Role::user}) {
    const std::vector<EntityId> entities = detail::stage_entities(g, stage);
    std::vector<std::optional<Profile>> results(entities.size());
    std::vector<ProfileFailure> failures;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> requests{0};

    auto work = [&](std::size_t i) {
      const EntityId e = entities[i];
      if (const Profile* done = resumed.find(e); done && done->provenance == Provenance::llm) {
        results[i] = *done;
        return;
      }
      PromptBundle bundle = build_prompt(stage, e, ctx, tset, run.store, options.limits, options.seed);
      Profile p{e, stage, template_text(bundle), Provenance::template_text, std::nullopt};
      if (mode == ProfileMode::llm) {
        try {
          ++requests;
          std::string text = completer(bundle);
          p = Profile{e, stage, std::move(text), Provenance::llm, client->model_name};
          std::lock_guard lock(mu);
          if (checkpoint) checkpoint << to_json(p, g).dump() << '\n' << std::flush;
        } catch (const std::exception& ex) {
          std::lock_guard lock(mu);
          failures.push_back({e, ex.what()});
        }
      }
      results[i] = std::move(p);
    };

    if (mode == ProfileMode::template_only) {
      for (std::size_t i = 0; i < entities.size(); ++i) work(i);
    } else {
      const std::size_t workers =
          std::clamp<std::size_t>(client->max_parallel_requests, 1, std::max<std::size_t>(entities.size(), 1));
      std::vector<std::exception_ptr> errors(workers);
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i = next++; i < entities.size(); i = next++) work(i);
          } catch (...) {
            errors[w] = std::current_exception();
            next = entities.size();
          }
        });
      for (auto& t : pool) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }

    run.requests += requests;
    for (std::size_t i = 0; i < entities.size(); ++i) {
      if (resumed.contains(entities[i]) && results[i]->provenance == Provenance::llm) ++run.resumed;
      run.store.add(std::move(*results[i]));
    }
    std::sort(failures.begin(), failures.end(),
              [](const ProfileFailure& a, const ProfileFailure& b) { return a.entity < b.entity; });
    const std::size_t attempted = requests.load();
    if (attempted > 0 && static_cast<double>(failures.size()) / attempted > options.max_failure_rate)
      throw Error(ErrorCode::profiling_failed,
                  std::to_string(failures.size()) + " of " + std::to_string(attempted) + " " +
                      to_string(stage) + " profiles failed; first: " + failures.front().message);
    run.failures.insert(run.failures.end(), failures.begin(), failures.end());
  }
  return run;
}

}  // namespace profkg
