#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "profkg/dataset.hpp"
#include "profkg/error.hpp"
#include "profkg/random.hpp"
#include "profkg/templates.hpp"

namespace profkg {

// Planted-preference data: every user favours one genre.
struct SyntheticSpec {
  std::size_t n_users = 200;
  std::size_t n_items = 100;
  std::size_t n_genres = 5;
  std::size_t interactions_per_user = 20;
  double in_genre_probability = 0.9;
  double review_probability = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::spec_invalid, what); };
    if (n_users < 1 || n_items < 1 || n_genres < 1) fail("counts must be >= 1");
    if (n_genres > n_items) fail("n_genres exceeds n_items");
    if (interactions_per_user < 1 || interactions_per_user >= n_items)
      fail("interactions per user must lie in [1, n_items)");
    if (!(in_genre_probability >= 0.0 && in_genre_probability <= 1.0)) fail("in-genre probability outside [0,1]");
    if (!(review_probability >= 0.0 && review_probability <= 1.0)) fail("review probability outside [0,1]");
  }
};

struct SyntheticData {
  std::vector<RawTriple> triples;
  std::vector<RawInteraction> interactions;
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::vector<std::string> genres;
  std::vector<std::size_t> user_genre;
  std::vector<std::size_t> item_genre;
  std::vector<Review> reviews;
};

inline std::string genre_name(std::size_t g) {
  static const char* names[] = {"mystery", "romance", "scifi", "horror", "comedy",
                                "western", "fantasy", "history", "poetry", "travel"};
  if (g < std::size(names)) return names[g];
  return "genre" + std::to_string(g);
}

// Item i has genre i mod G. Each draw stays in the user's genre with the configured
// probability (falling back to the other pool once one is exhausted); draws never repeat.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, "synthetic");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticData d;
  for (std::size_t g = 0; g < spec.n_genres; ++g) d.genres.push_back(genre_name(g));
  for (std::size_t i = 0; i < spec.n_items; ++i) {
    d.items.push_back("item" + std::to_string(i));
    d.item_genre.push_back(i % spec.n_genres);
    d.triples.push_back({d.items.back(), "genre", d.genres[d.item_genre.back()]});
  }
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    d.users.push_back("user" + std::to_string(u));
    const std::size_t genre = uniform_index(rng, spec.n_genres);
    d.user_genre.push_back(genre);
    std::vector<std::size_t> in, off;
    for (std::size_t i = 0; i < spec.n_items; ++i) (d.item_genre[i] == genre ? in : off).push_back(i);
    for (std::size_t k = 0; k < spec.interactions_per_user; ++k) {
      bool pick_in = unit(rng) < spec.in_genre_probability;
      if (in.empty()) pick_in = false;
      if (off.empty()) pick_in = true;
      std::vector<std::size_t>& pool = pick_in ? in : off;
      const std::size_t at = uniform_index(rng, pool.size());
      const std::size_t item = pool[at];
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(at));
      d.interactions.push_back({d.users[u], d.items[item], std::nullopt});
      if (unit(rng) < spec.review_probability)
        d.reviews.push_back({d.users[u], d.items[item],
                             "A " + d.genres[d.item_genre[item]] + " title. I " +
                                 (d.item_genre[item] == genre ? "loved" : "did not mind") + " this " +
                                 d.genres[d.item_genre[item]] + " story."});
    }
  }
  return d;
}

// Writes the dataset files and a `dataset.conf` manifest (with checksums) into `dir`.
inline std::vector<std::string> write_synthetic(const SyntheticData& d, const std::string& dir,
                                                const std::string& name = "synthetic") {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const std::string& file) {
    std::ofstream out(fs::path(dir) / file, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + (fs::path(dir) / file).string());
    return out;
  };
  {
    auto out = open("triples.tsv");
    for (const RawTriple& t : d.triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  }
  {
    auto out = open("interactions.tsv");
    for (const RawInteraction& p : d.interactions) out << p.user << '\t' << p.item << '\n';
  }
  {
    auto out = open("users.txt");
    for (const std::string& u : d.users) out << u << '\n';
  }
  {
    auto out = open("items.txt");
    for (const std::string& v : d.items) out << v << '\n';
  }
  save_reviews(d.reviews, (fs::path(dir) / "reviews.jsonl").string());
  save_templates(default_templates(), (fs::path(dir) / "templates.json").string());

  const std::vector<std::pair<std::string, std::string>> files{
      {"triples", "triples.tsv"}, {"interactions", "interactions.tsv"}, {"users", "users.txt"},
      {"items", "items.txt"},     {"reviews", "reviews.jsonl"},         {"templates", "templates.json"}};
  auto conf = open("dataset.conf");
  conf << "# generated dataset manifest\nname = " << name << '\n';
  std::vector<std::string> written;
  for (const auto& [key, file] : files) {
    conf << key << " = " << file << '\n';
    written.push_back((fs::path(dir) / file).string());
  }
  for (const auto& [key, file] : files)
    conf << "checksum." << key << " = " << file_checksum((fs::path(dir) / file).string()) << '\n';
  written.push_back((fs::path(dir) / "dataset.conf").string());
  return written;
}

}  // namespace profkg
