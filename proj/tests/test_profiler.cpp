#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <thread>

#include "profkg/matrix_io.hpp"
#include "profkg/profiler.hpp"

using namespace profkg;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::usage;
}

// Two users, three books, two authors, one genre.
KnowledgeGraph library() {
  return build_graph({{"alice", "interact", "Wicked"},
                      {"alice", "interact", "Dune"},
                      {"bob", "interact", "Emma"},
                      {"Wicked", "literaryGenre", "Fantasy"},
                      {"Dune", "literaryGenre", "Fantasy"},
                      {"Wicked", "author", "Maguire"},
                      {"Emma", "author", "Austen"}},
                     {}, {});
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "profkg_profiler_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Minimal chat-completion server on a random local port.
class StubServer {
 public:
  explicit StubServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string completion(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

LlmClientConfig client_for(const StubServer& s) {
  LlmClientConfig c;
  c.endpoint_url = s.url();
  c.model_name = "stub-model";
  c.api_key_env = "";
  c.backoff_base_seconds = 0.001;
  c.request_timeout_seconds = 5;
  return c;
}

PromptBundle hello_bundle() {
  PromptBundle b;
  b.system = "sys";
  b.user_message = "hello";
  return b;
}

}  // namespace

TEST(Templates, TableExamples) {
  const TemplateSet t = default_templates();
  EXPECT_EQ(render_template(t, "literaryGenre", Hop::one, "Wicked", "Fantasy"),
            "Wicked belongs to the literary genre Fantasy.");
  EXPECT_EQ(render_template(t, "literaryGenre", Hop::two, "", "Fantasy", std::vector<std::string>{"A", "B"}),
            "The literary genre 'Fantasy' also includes items such as A, B.");
  EXPECT_EQ(render_template(t, "unknownRel", Hop::one, "X", "Y"), "X is related to Y via unknownRel.");
}

TEST(Templates, TwoHopTruncatesToConfiguredCount) {
  TemplateSet t = default_templates();
  t.max_twohop_items = 2;
  EXPECT_EQ(render_template(t, "author", Hop::two, "", "Ann", std::vector<std::string>{"A", "B", "C"}),
            "Ann also wrote other works like A, B.");
}

TEST(Templates, MissingLabelAndValidation) {
  const TemplateSet t = default_templates();
  EXPECT_EQ(code_of([&] { render_template(t, "author", Hop::one, "", "Ann"); }), ErrorCode::missing_label);
  EXPECT_EQ(code_of([&] { render_template(t, "author", Hop::two, "", "Ann"); }), ErrorCode::missing_label);
  TemplateSet bad = t;
  bad.relations["author"].one_hop = "[ITEM] by [ITEM]";
  EXPECT_THROW(validate(bad), Error);
}

TEST(Templates, PlaceholderValuesAreNotReExpanded) {
  const TemplateSet t = default_templates();
  EXPECT_EQ(render_template(t, "author", Hop::one, "[ENTITY]", "Ann"), "[ENTITY] lists Ann as its author.");
}

TEST(Templates, JsonRoundTrip) {
  TemplateSet t = default_templates();
  t.relations["cuisine"] = {"[ITEM] serves [ENTITY] food.", "[ENTITY] food is also served at [ITEMS].",
                            "[ENTITY] is served at [ITEM]."};
  const auto path = temp_path("templates.json").string();
  save_templates(t, path);
  const TemplateSet back = load_templates(path);
  EXPECT_EQ(back.relations.size(), t.relations.size());
  EXPECT_EQ(render_template(back, "cuisine", Hop::one, "Joe's", "Thai"), "Joe's serves Thai food.");
  EXPECT_EQ(back.item_instruction, t.item_instruction);
}

TEST(Prompt, ItemPromptCapsReviewsDeterministically) {
  const auto g = library();
  std::vector<Review> reviews;
  for (int i = 0; i < 5; ++i) reviews.push_back({"nobody", "Wicked", "review " + std::to_string(i)});
  const ProfileContext ctx(g, reviews);
  PromptLimits limits;
  limits.max_reviews = 2;
  const auto wicked = *g.find_entity("Wicked");
  const auto a = build_prompt(Role::item, wicked, ctx, default_templates(), ProfileStore(g.entity_count()), limits, 9);
  const auto b = build_prompt(Role::item, wicked, ctx, default_templates(), ProfileStore(g.entity_count()), limits, 9);
  std::size_t n_reviews = 0;
  std::set<std::string> distinct;
  for (const auto& p : a.parts)
    if (p.kind == PartKind::review) {
      ++n_reviews;
      distinct.insert(p.text);
    }
  EXPECT_EQ(n_reviews, 2u);
  EXPECT_EQ(distinct.size(), 2u);
  EXPECT_EQ(a.user_message, b.user_message);
  EXPECT_EQ(a.parts[0].text, "Wicked belongs to the literary genre Fantasy.");
  EXPECT_EQ(a.parts[1].text, "Wicked lists Maguire as its author.");
  EXPECT_EQ(a.parts[2].text, "The literary genre 'Fantasy' also includes items such as Dune.");
  std::string joined;
  for (std::size_t i = 0; i < a.parts.size(); ++i) joined += (i ? "\n" : "") + a.parts[i].text;
  EXPECT_EQ(a.user_message, joined);
}

TEST(Prompt, AuxiliaryPromptCapsRelatedProfiles) {
  std::vector<RawTriple> raw{{"u", "interact", "book0"}};
  for (int i = 0; i < 10; ++i) raw.push_back({"book" + std::to_string(i), "genre", "Drama"});
  const auto g = build_graph(raw, {"u"}, {"book0", "book1", "book2", "book3", "book4", "book5", "book6", "book7",
                                         "book8", "book9"});
  ProfileStore store(g.entity_count());
  for (EntityId v : g.items()) store.add({v, Role::item, "profile of " + g.entity_label(v), Provenance::template_text, {}});
  const ProfileContext ctx(g, {});
  PromptLimits limits;
  limits.max_related = 4;
  const auto b = build_prompt(Role::auxiliary, *g.find_entity("Drama"), ctx, default_templates(), store, limits, 1);
  std::size_t related = 0;
  for (const auto& p : b.parts) related += p.kind == PartKind::related_profile;
  EXPECT_EQ(related, 4u);
}

TEST(Prompt, UserBeforeItemsIsMissingDependency) {
  const auto g = library();
  const ProfileContext ctx(g, {});
  EXPECT_EQ(code_of([&] {
              build_prompt(Role::user, *g.find_entity("alice"), ctx, default_templates(),
                           ProfileStore(g.entity_count()), {}, 0);
            }),
            ErrorCode::missing_dependency_profile);
  EXPECT_EQ(code_of([&] {
              build_prompt(Role::item, *g.find_entity("alice"), ctx, default_templates(),
                           ProfileStore(g.entity_count()), {}, 0);
            }),
            ErrorCode::role_mismatch);
}

TEST(Prompt, HeldOutReviewsAreDropped) {
  const auto full = library();
  const std::vector<Interaction> keep{{*full.find_entity("alice"), *full.find_entity("Wicked")}};
  const auto train = full.with_interactions(keep);
  const ProfileContext ctx(train, {{"alice", "Dune", "secret"}, {"alice", "Wicked", "public"}});
  EXPECT_TRUE(ctx.item_reviews(*train.find_entity("Dune")).empty());
  ASSERT_EQ(ctx.item_reviews(*train.find_entity("Wicked")).size(), 1u);
}

TEST(Profiler, TemplateModeCoversEveryEntityBottomUp) {
  const auto g = library();
  const ProfileRun run = generate_all_profiles(g, default_templates(), {}, ProfileMode::template_only, std::nullopt);
  EXPECT_EQ(run.requests, 0u);
  ASSERT_TRUE(run.store.complete());
  std::size_t last_item = 0, first_aux = g.entity_count(), last_aux = 0, first_user = g.entity_count();
  for (std::size_t i = 0; i < g.entity_count(); ++i) {
    const EntityId e = entity_at(i);
    const std::size_t at = *run.store.generation_index(e);
    EXPECT_EQ(run.store.at(e).provenance, Provenance::template_text);
    EXPECT_EQ(run.store.at(e).kind, g.role(e));
    EXPECT_EQ(run.store.at(e).text.find("[ITEM"), std::string::npos);
    switch (g.role(e)) {
      case Role::item: last_item = std::max(last_item, at); break;
      case Role::auxiliary:
        first_aux = std::min(first_aux, at);
        last_aux = std::max(last_aux, at);
        break;
      case Role::user: first_user = std::min(first_user, at); break;
    }
  }
  EXPECT_LT(last_item, first_aux);
  EXPECT_LT(last_aux, first_user);
}

TEST(Profiler, ThreeEntityGraphGivesThreeProfilesAndIsReproducible) {
  const auto g = build_graph({{"u", "interact", "i"}, {"i", "genre", "jazz"}}, {}, {});
  const auto a = generate_all_profiles(g, default_templates(), {}, ProfileMode::template_only, std::nullopt);
  const auto b = generate_all_profiles(g, default_templates(), {}, ProfileMode::template_only, std::nullopt);
  EXPECT_EQ(a.store.size(), 3u);
  const auto pa = temp_path("a.jsonl").string(), pb = temp_path("b.jsonl").string();
  save_profiles(a.store, g, pa);
  save_profiles(b.store, g, pb);
  EXPECT_EQ(read_file_bytes(pa), read_file_bytes(pb));
  const ProfileStore back = load_profiles(g, pa);
  EXPECT_EQ(back.at(*g.find_entity("jazz")).text, a.store.at(*g.find_entity("jazz")).text);
}

TEST(Profiler, BottomUpDependencyOrderInPrompts) {
  const auto g = library();
  const ProfileRun run = generate_all_profiles(g, default_templates(), {}, ProfileMode::template_only, std::nullopt);
  const ProfileContext ctx(g, {});
  for (std::size_t i = 0; i < g.entity_count(); ++i) {
    const EntityId e = entity_at(i);
    if (g.is_item(e)) continue;
    const auto b = build_prompt(g.role(e), e, ctx, default_templates(), run.store, {}, 0);
    for (const auto& p : b.parts)
      if (p.kind == PartKind::related_profile)
        EXPECT_LT(*run.store.generation_index(*p.source), *run.store.generation_index(e));
  }
}

TEST(Profiler, LlmModeWithoutClientIsConfigMissing) {
  EXPECT_EQ(code_of([] {
              generate_all_profiles(library(), default_templates(), {}, ProfileMode::llm, std::nullopt);
            }),
            ErrorCode::config_missing);
}

TEST(Profiler, LlmModeUsesCompleterAndFallsBackPerEntity) {
  const auto g = library();
  LlmClientConfig cfg;
  cfg.model_name = "m";
  cfg.max_parallel_requests = 3;
  std::atomic<int> calls{0};
  auto completer = [&](const PromptBundle& b) -> std::string {
    ++calls;
    if (b.system == default_templates().item_instruction && b.user_message.find("Emma lists") == 0)
      throw Error(ErrorCode::empty_completion, "stub");
    return "llm: " + b.user_message.substr(0, 10);
  };
  ProfilerOptions opts;
  const auto run = generate_all_profiles(g, default_templates(), {}, ProfileMode::llm, cfg, opts, completer);
  EXPECT_EQ(calls.load(), static_cast<int>(g.entity_count()));
  ASSERT_EQ(run.failures.size(), 1u);
  EXPECT_EQ(run.store.at(*g.find_entity("Emma")).provenance, Provenance::template_text);
  EXPECT_EQ(run.store.at(*g.find_entity("Dune")).provenance, Provenance::llm);
  EXPECT_EQ(*run.store.at(*g.find_entity("Dune")).model, "m");
}

TEST(Profiler, FailureRateAboveThresholdAborts) {
  LlmClientConfig cfg;
  auto completer = [](const PromptBundle&) -> std::string { throw Error(ErrorCode::timeout, "stub"); };
  EXPECT_EQ(code_of([&] {
              generate_all_profiles(library(), default_templates(), {}, ProfileMode::llm, cfg, {}, completer);
            }),
            ErrorCode::profiling_failed);
}

TEST(Profiler, CheckpointResumesCompletedEntities) {
  const auto g = library();
  const auto ckpt = temp_path("resume.jsonl");
  std::filesystem::remove(ckpt);
  LlmClientConfig cfg;
  cfg.model_name = "m";
  ProfilerOptions opts;
  opts.checkpoint_path = ckpt.string();
  opts.max_failure_rate = 1.0;
  // First run: users fail, so only items and auxiliaries are checkpointed.
  auto flaky = [&](const PromptBundle& b) -> std::string {
    if (b.system == default_templates().user_instruction) throw Error(ErrorCode::timeout, "stub");
    return "done";
  };
  generate_all_profiles(g, default_templates(), {}, ProfileMode::llm, cfg, opts, flaky);
  std::atomic<int> calls{0};
  auto counting = [&](const PromptBundle&) -> std::string {
    ++calls;
    return "second";
  };
  const auto run = generate_all_profiles(g, default_templates(), {}, ProfileMode::llm, cfg, opts, counting);
  EXPECT_EQ(calls.load(), static_cast<int>(g.users().size()));
  EXPECT_EQ(run.resumed, g.entity_count() - g.users().size());
  EXPECT_EQ(run.store.at(*g.find_entity("Wicked")).text, "done");
  EXPECT_EQ(run.store.at(*g.find_entity("alice")).text, "second");
}

TEST(LlmClient, StubReturnsOkAndSendsChatBody) {
  nlohmann::json seen;
  std::string auth;
  StubServer s([&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(completion("ok"), "application/json");
  });
  auto cfg = client_for(s);
  EXPECT_EQ(llm_complete(cfg, hello_bundle()), "ok");
  EXPECT_EQ(seen["model"], "stub-model");
  EXPECT_EQ(seen["messages"][0]["role"], "system");
  EXPECT_EQ(seen["messages"][1]["content"], "hello");
  EXPECT_TRUE(auth.empty());

  setenv("PROFKG_TEST_KEY", "secret", 1);
  cfg.api_key_env = "PROFKG_TEST_KEY";
  EXPECT_EQ(llm_complete(cfg, hello_bundle()), "ok");
  EXPECT_EQ(auth, "Bearer secret");
  cfg.api_key_env = "PROFKG_TEST_KEY_UNSET";
  EXPECT_EQ(code_of([&] { llm_complete(cfg, hello_bundle()); }), ErrorCode::config_missing);
}

TEST(LlmClient, RetriesRateLimitThenSucceeds) {
  std::atomic<int> hits{0};
  StubServer s([&](const httplib::Request&, httplib::Response& res) {
    if (hits++ < 2) {
      res.status = 429;
      return;
    }
    res.set_content(completion("finally"), "application/json");
  });
  EXPECT_EQ(llm_complete(client_for(s), hello_bundle()), "finally");
  EXPECT_EQ(hits.load(), 3);
}

TEST(LlmClient, PersistentRateLimitGivesUp) {
  std::atomic<int> hits{0};
  StubServer s([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 429;
  });
  auto cfg = client_for(s);
  cfg.max_retries = 3;
  EXPECT_EQ(code_of([&] { llm_complete(cfg, hello_bundle()); }), ErrorCode::rate_limited);
  EXPECT_EQ(hits.load(), 4);
}

TEST(LlmClient, EmptyContentAndHttpErrors) {
  StubServer empty([](const httplib::Request&, httplib::Response& res) {
    res.set_content(completion(""), "application/json");
  });
  EXPECT_EQ(code_of([&] { llm_complete(client_for(empty), hello_bundle()); }), ErrorCode::empty_completion);

  StubServer broken([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  try {
    llm_complete(client_for(broken), hello_bundle());
    ADD_FAILURE();
  } catch (const HttpError& e) {
    EXPECT_EQ(e.status(), 503);
  }
}

TEST(LlmClient, SlowServerTimesOut) {
  StubServer slow([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content(completion("late"), "application/json");
  });
  auto cfg = client_for(slow);
  cfg.request_timeout_seconds = 0.2;
  EXPECT_EQ(code_of([&] { llm_complete(cfg, hello_bundle()); }), ErrorCode::timeout);
}

TEST(LlmClient, ProfilerAgainstStubServer) {
  std::atomic<int> hits{0};
  StubServer s([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.set_content(completion("profile text"), "application/json");
  });
  const auto g = library();
  const auto run = generate_all_profiles(g, default_templates(), {}, ProfileMode::llm, client_for(s));
  EXPECT_EQ(hits.load(), static_cast<int>(g.entity_count()));
  EXPECT_EQ(run.requests, g.entity_count());
  for (std::size_t i = 0; i < g.entity_count(); ++i)
    EXPECT_EQ(run.store.at(entity_at(i)).provenance, Provenance::llm);
}
