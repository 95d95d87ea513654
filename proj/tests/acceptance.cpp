// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.
// argv[1], when given, is the path of the profkg binary used for the determinism run.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <unistd.h>

#include "oracles.hpp"
#include "profkg/cli.hpp"
#include "profkg/evaluator.hpp"
#include "profkg/losses.hpp"
#include "profkg/model.hpp"
#include "profkg/pipeline.hpp"
#include "profkg/synthetic.hpp"
#include "profkg/templates.hpp"
#include "profkg/trainer.hpp"

using namespace profkg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (limit_s > 0 && secs >= limit_s) {
    o.pass = false;
    o.detail += " (over time limit " + std::to_string(limit_s) + " s)";
  }
  if (!o.pass) ++failures;
  std::printf("%s %2d %-28s %8.2fs  %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

template <typename T>
ModelParams<T> randomized(Rng& rng, const ModelConfig& cfg, const KnowledgeGraph& g, double lo, double hi) {
  ModelParams<T> p = init_params<T>(cfg, g.entity_count(), g.relation_count(), 1);
  for (Matrix<T>* m : p.tensors()) *m = oracle::random_matrix<T>(rng, m->rows(), m->cols(), lo, hi);
  return p;
}

template <typename T>
ProfileInputs<T> random_profiles(Rng& rng, const KnowledgeGraph& g, std::size_t ds) {
  ProfileInputs<T> in;
  in.entity_profiles =
      oracle::random_matrix<T>(rng, static_cast<Eigen::Index>(g.entity_count()), static_cast<Eigen::Index>(ds), 0.0, 1.0);
  in.relation_profiles = oracle::random_matrix<T>(rng, static_cast<Eigen::Index>(g.relation_count()),
                                                  static_cast<Eigen::Index>(ds), 0.0, 1.0);
  return in;
}

Outcome injection_identity() {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    oracle::RandomGraphSpec spec;
    spec.users = 5;
    spec.items = 8;
    spec.aux = 4;
    spec.interactions = 15;
    spec.kg_triples = 10;
    const auto g = oracle::random_graph(rng, spec);
    ModelConfig cfg;
    cfg.layers = 0;
    cfg.fusion = FusionMode::add_with_inverse;
    cfg.profile_dim = 32;
    const auto p = init_params<float>(cfg, g.entity_count(), g.relation_count(), seed);
    const auto in = random_profiles<float>(rng, g, cfg.profile_dim);
    worst = std::max(worst, static_cast<double>((propagate(p, cfg, in, g).z - p.entity).cwiseAbs().maxCoeff()));
  }
  return {worst < 1e-6, "max |z - X| = " + fmt(worst)};
}

Outcome attention_normalization() {
  Rng rng(2);
  double worst = 0;
  std::size_t singles = 0, single_bad = 0;
  for (int trial = 0; trial < 20; ++trial) {
    oracle::RandomGraphSpec spec;
    spec.users = 10 + uniform_index(rng, 20);
    spec.items = 10 + uniform_index(rng, 40);
    spec.aux = uniform_index(rng, 20);
    spec.interactions = 20 + uniform_index(rng, 150);
    spec.kg_triples = uniform_index(rng, 120);
    spec.relations = 1 + uniform_index(rng, 4);
    const auto g = oracle::random_graph(rng, spec);
    if (g.entity_count() > 100) return {false, "random graph exceeded 100 entities"};
    ModelConfig cfg;
    cfg.dim = 16;
    const auto p = randomized<float>(rng, cfg, g, -1.0, 1.0);
    const auto a = attention_scores(p, p.entity, p.relation, g);
    for (std::size_t h = 0; h < g.entity_count(); ++h) {
      const auto edges = g.neighbors(entity_at(h));
      if (edges.empty()) continue;
      double sum = 0;
      for (const auto& e : edges) sum += a.weights[e.triple];
      worst = std::max(worst, std::abs(sum - 1.0));
      if (edges.size() == 1) {
        ++singles;
        if (a.weights[edges[0].triple] != 1.0f) ++single_bad;
      }
    }
  }
  return {worst <= 1e-6 && single_bad == 0 && singles > 0,
          "max |sum - 1| = " + fmt(worst) + ", single-neighbor heads " + std::to_string(singles) + " (" +
              std::to_string(single_bad) + " not 1.0)"};
}

Outcome matching_oracle() {
  Rng rng(3);
  double worst = 0;
  for (std::size_t n : {2u, 10u, 30u}) {
    const auto a = oracle::random_matrix<double>(rng, static_cast<Eigen::Index>(n), 6);
    const auto b = oracle::random_matrix<double>(rng, static_cast<Eigen::Index>(n), 9);
    const auto rounds = sample_matching_rounds(n, 1.0, 1, rng);
    worst = std::max(worst, std::abs(pairwise_matching_loss(a, b, rounds).value - oracle::full_matching_loss(a, b)));
  }
  Matrix<double> a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 1, 0, 1, 0;
  const double fixture = pairwise_matching_loss(a, b, SampledRounds{{0, 1}}).value;
  return {worst < 1e-6 && fixture == 0.5, "max diff " + fmt(worst) + ", 2x2 fixture " + fmt(fixture)};
}

Outcome gradient_check() {
  Rng rng(17);
  double worst = 0;
  std::size_t coords = 0;
  std::string where;
  for (std::size_t layers : {0u, 1u, 2u}) {
    oracle::RandomGraphSpec spec;
    spec.users = 2;
    spec.items = 4;
    spec.aux = 2;
    spec.interactions = 6;
    spec.kg_triples = 6;
    const auto g = oracle::random_graph(rng, spec);
    if (g.entity_count() > 10) return {false, "instance exceeded 10 entities"};
    TrainConfig cfg;
    cfg.model.dim = 4;
    cfg.model.profile_dim = 5;
    cfg.model.hidden = 3;
    cfg.model.layers = layers;
    cfg.model.fusion = FusionMode::add_with_inverse;
    cfg.lambda_pair = 0.3;
    cfg.sample_ratio = 0.5;
    cfg.rounds = 2;
    auto p = randomized<double>(rng, cfg.model, g, -0.7, 0.7);
    const auto in = random_profiles<double>(rng, g, 5);
    const InteractionIndex index(g, g.interactions());
    const auto batch = sample_negatives(g.interactions(), index, rng);
    const auto rounds = sample_matching_rounds(g.entity_count(), 0.5, 2, rng);
    const auto result = loss_and_gradients(p, cfg, in, g, batch, rounds);
    if (!(result.loss.rec > 0 && result.loss.pair > 0)) return {false, "a loss term is inactive"};
    const auto check = oracle::check_gradients(
        p, result.grads, [&] { return loss_and_gradients(p, cfg, in, g, batch, rounds, false).loss.total; });
    coords += check.coordinates;
    if (check.max_relative > worst) {
      worst = check.max_relative;
      where = "L=" + std::to_string(layers) + " " + check.worst;
    }
  }
  return {worst < 1e-5, "max rel err " + fmt(worst) + " over " + std::to_string(coords) + " coords " + where};
}

Outcome metric_oracles() {
  auto ranked = [](std::initializer_list<std::uint32_t> ids) {
    RankedList r;
    for (auto i : ids) r.items.push_back(entity_at(i));
    return r;
  };
  auto rel = [](std::initializer_list<std::uint32_t> ids) {
    std::set<EntityId> s;
    for (auto i : ids) s.insert(entity_at(i));
    return s;
  };
  std::vector<std::string> bad;
  auto near = [&](const std::string& name, double got, double want) {
    if (std::abs(got - want) > 1e-4) bad.push_back(name + "=" + fmt(got));
  };
  // relevant items at ranks 1 and 3 of a three-item list
  near("ndcg@3", ndcg_at_k(ranked({1, 2, 3}), rel({1, 3}), 3), 0.9197);
  const auto r = ranked({5, 1, 7, 3, 9});
  near("recall@2", recall_at_k(r, rel({1, 3}), 2), 0.5);
  near("recall@4", recall_at_k(r, rel({1, 3}), 4), 1.0);
  near("recall@5 miss", recall_at_k(r, rel({2}), 5), 0.0);
  near("recall@10 half", recall_at_k(r, rel({1, 2, 3, 4}), 10), 0.5);
  near("recall@1", recall_at_k(r, rel({5, 9}), 1), 0.5);

  Rng rng(10);
  std::size_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 5 + uniform_index(rng, 40);
    RankedList list;
    for (std::size_t i : sample_without_replacement(rng, n, n)) list.items.push_back(entity_at(static_cast<std::uint32_t>(i)));
    std::set<EntityId> relevant;
    for (std::size_t i : sample_without_replacement(rng, n, 1 + uniform_index(rng, n)))
      relevant.insert(entity_at(static_cast<std::uint32_t>(i)));
    double prev = 0;
    for (std::size_t k = 1; k <= n; ++k) {
      const double v = recall_at_k(list, relevant, k);
      if (v < prev) ++violations;
      prev = v;
    }
  }
  std::string detail = "fixtures " + std::string(bad.empty() ? "ok" : "off:");
  for (const auto& b : bad) detail += " " + b;
  detail += ", monotonicity violations " + std::to_string(violations);
  return {bad.empty() && violations == 0, detail};
}

Outcome propagation_oracle() {
  Rng rng(31);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    oracle::RandomGraphSpec spec;
    spec.users = 2 + uniform_index(rng, 5);
    spec.items = 3 + uniform_index(rng, 7);
    spec.aux = uniform_index(rng, 5);
    spec.interactions = 4 + uniform_index(rng, 20);
    spec.kg_triples = uniform_index(rng, 15);
    spec.relations = 1 + uniform_index(rng, 3);
    const auto g = oracle::random_graph(rng, spec);
    if (g.entity_count() > 20) return {false, "random graph exceeded 20 entities"};
    ModelConfig cfg;
    cfg.dim = 6;
    cfg.profile_dim = 7;
    cfg.hidden = 5;
    cfg.layers = static_cast<std::size_t>(trial % 4);
    cfg.fusion = kAllFusionModes[static_cast<std::size_t>(trial) % std::size(kAllFusionModes)];
    auto p = randomized<double>(rng, cfg, g, -0.8, 0.8);
    if (is_multiplicative(cfg.fusion)) p.proj_w2 *= 0.3;
    const auto in = random_profiles<double>(rng, g, cfg.profile_dim);
    worst = std::max(worst, (propagate(p, cfg, in, g).z - oracle::dense_propagate(p, cfg, in, g)).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-6, "max |sparse - dense| = " + fmt(worst)};
}

// Default planted-genre data, written to disk and read back through the manifest.
Config synthetic_config(const fs::path& root, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  const fs::path dir = root / ("synthetic" + std::to_string(seed));
  write_synthetic(generate_synthetic(spec), dir.string());
  Config c = Config::load((dir / "dataset.conf").string());
  c.set("seed", std::to_string(seed));
  c.set("max_epochs", "200");
  return c;
}

Outcome synthetic_learning(const fs::path& root) {
  const Config c = synthetic_config(root, 0);
  const Dataset ds = load_dataset(c);
  const RunSettings s = settings_from_config(c);
  if (s.train.model.dim != 64 || s.train.model.layers != 2 || s.train.model.lambda_p != 0.25 ||
      s.train.sample_ratio != 0.1)
    return {false, "defaults differ from d=64, L=2, lambda_p=0.25, q=0.1"};
  const Prepared p = prepare(ds, s);
  const auto r = run_experiment(ds, s, p);
  const double random = random_recall_expectation(p.train_graph, p.split, EvalTarget::validation, 10);
  const double got = r.validation.recall_at(10);
  return {got >= 3 * random, "val recall@10 " + fmt(got) + " vs random " + fmt(random) + " (x" + fmt(got / random) +
                                 "), " + std::to_string(r.fit.log.size()) + " epochs"};
}

Outcome ablation_direction(const fs::path& root) {
  int profile_wins = 0, inverse_wins = 0;
  std::ostringstream rows;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Config base = synthetic_config(root, seed);
    const Dataset ds = load_dataset(base);
    double v[3];
    const char* drops[3] = {"", "profiles", "removal"};
    for (int k = 0; k < 3; ++k) {
      Config c = base;
      c.set("drop", drops[k]);
      const RunSettings s = settings_from_config(c);
      v[k] = run_experiment(ds, s, prepare(ds, s)).validation.recall_at(20);
    }
    profile_wins += v[0] > v[1];
    inverse_wins += v[0] > v[2];
    rows << " s" << seed << ":" << fmt(v[0]) << "/" << fmt(v[1]) << "/" << fmt(v[2]);
  }
  return {profile_wins >= 8 && inverse_wins >= 8,
          "full>no-profile " + std::to_string(profile_wins) + "/10, add-inv>add-no-inv " +
              std::to_string(inverse_wins) + "/10; val R@20 full/no-profile/no-inv" + rows.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

int run_tool(const std::string& binary, const std::vector<std::string>& args) {
  if (binary.empty()) {
    std::vector<const char*> argv{"profkg"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  std::string cmd = "\"" + binary + "\"";
  for (const auto& a : args) cmd += " \"" + a + "\"";
  cmd += " > /dev/null";
  return std::system(cmd.c_str());
}

Outcome determinism(const fs::path& root, const std::string& binary) {
  const fs::path dir = root / "determinism";
  const std::string data = (dir / "data").string();
  if (run_tool(binary, {"synth", "--out", data, "--seed", "4"}) != 0) return {false, "synth failed"};
  {
    std::ofstream conf(dir / "run.conf");
    conf << "dataset = data/dataset.conf\nmax_epochs = 30\n";
  }
  const std::string conf = (dir / "run.conf").string();
  for (const char* out : {"a", "b"})
    if (run_tool(binary, {"train", "--config", conf, "--seed", "11", "--out", (dir / out).string()}) != 0)
      return {false, std::string("train into ") + out + " failed"};
  const auto a = tree(dir / "a"), b = tree(dir / "b");
  if (!a.count("train_log.jsonl") || !a.count("checkpoint/manifest.json")) return {false, "expected outputs missing"};
  std::size_t lines = std::count(a.at("train_log.jsonl").begin(), a.at("train_log.jsonl").end(), '\n');
  return {a == b, std::to_string(a.size()) + " files compared, " + std::to_string(lines) + " log lines, " +
                      (a == b ? "identical" : "differ") + (binary.empty() ? " (in-process)" : "")};
}

Outcome template_fidelity() {
  const TemplateSet set = default_templates();
  // relation, 1-hop rendering, 2-hop rendering; item "Dune", entity "X", related items "Emma, Ulysses"
  const std::vector<std::array<std::string, 3>> fixtures{
      {"subject", "Dune is about X.", "X also appears as a subject in items such as Emma, Ulysses."},
      {"author", "Dune lists X as its author.", "X also wrote other works like Emma, Ulysses."},
      {"literaryGenre", "Dune belongs to the literary genre X.",
       "The literary genre 'X' also includes items such as Emma, Ulysses."},
      {"subsequentWork", "Dune is followed by X.", "X is followed by items such as Emma, Ulysses."},
      {"previousWork", "Dune comes after X.", "X is preceded by works like Emma, Ulysses."},
      {"series", "Dune is part of the series called X.", "The series 'X' also includes items such as Emma, Ulysses."},
      {"director", "Dune was directed by X.", "X also directed other items like Emma, Ulysses."},
      {"musicComposer", "Dune features music composed by X.", "X also composed music for works such as Emma, Ulysses."},
      {"producer", "Dune was produced by X.", "X also produced items like Emma, Ulysses."},
      {"starring", "Dune stars X.", "X also starred in items such as Emma, Ulysses."},
      {"writer", "Dune was written by X.", "X also contributed to writing items like Emma, Ulysses."},
      {"genre", "Dune is categorized under the genre X.", "The genre 'X' also includes items such as Emma, Ulysses."},
      {"composer", "Dune includes compositions by X.", "X also composed other items like Emma, Ulysses."},
      {"creator", "Dune was created by X.", "X also created works such as Emma, Ulysses."},
      {"executiveProducer", "Dune had X as executive producer.",
       "X also served as executive producer for items like Emma, Ulysses."},
      {"notableWork", "Dune is best known for X.", "X is also notable in works such as Emma, Ulysses."},
      {"award", "Dune received the award titled X.", "Items that received the 'X' award also include Emma, Ulysses."},
      {"portrayer", "Dune features a character portrayed by X.",
       "X also portrayed characters in items such as Emma, Ulysses."},
      {"album", "Dune is included in the album X.", "The album 'X' also contains items such as Emma, Ulysses."},
      {"artist", "Dune features a performance by X.", "X also performed in items like Emma, Ulysses."},
  };
  const std::vector<std::string> related{"Emma", "Ulysses"};
  std::vector<std::string> bad;
  for (const auto& [relation, one, two] : fixtures) {
    if (render_template(set, relation, Hop::one, "Dune", "X") != one) bad.push_back(relation + "/1");
    if (render_template(set, relation, Hop::two, "", "X", related) != two) bad.push_back(relation + "/2");
  }
  std::string detail = std::to_string(fixtures.size() * 2) + " renderings, " + std::to_string(bad.size()) + " mismatched";
  for (const auto& b : bad) detail += " " + b;
  return {bad.empty() && set.relations.size() >= fixtures.size(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string binary = argc > 1 ? argv[1] : "";
  const fs::path root = fs::temp_directory_path() / ("profkg_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);

  report(1, "injection-removal identity", 1, injection_identity);
  report(2, "attention normalization", 1, attention_normalization);
  report(3, "matching-loss oracle", 1, matching_oracle);
  report(4, "gradient check", 60, gradient_check);
  report(5, "metric oracles", 1, metric_oracles);
  report(6, "propagation oracle", 5, propagation_oracle);
  report(7, "synthetic learning", 300, [&] { return synthetic_learning(root); });
  report(8, "ablation direction", 1800, [&] { return ablation_direction(root); });
  report(9, "determinism", 300, [&] { return determinism(root, binary); });
  report(10, "template fidelity", 0, template_fidelity);

  fs::remove_all(root);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures ? 1 : 0;
}
