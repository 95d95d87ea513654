#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "profkg/config.hpp"
#include "profkg/error.hpp"
#include "profkg/graph.hpp"
#include "profkg/hash.hpp"
#include "profkg/matrix_io.hpp"
#include "profkg/profiles.hpp"
#include "profkg/templates.hpp"

namespace profkg {

inline const std::vector<std::string> kManifestFiles{"triples", "interactions", "users", "items", "reviews",
                                                     "templates"};

struct DatasetManifest {
  std::string name = "dataset";
  std::map<std::string, std::string> paths;      // keyed by kManifestFiles entries
  std::map<std::string, std::string> checksums;  // optional, same keys
  std::string interaction_relation = "interact";
  std::size_t kcore = 0;  // 0 disables the filter

  std::string path(const std::string& key) const {
    auto it = paths.find(key);
    return it == paths.end() ? std::string() : it->second;
  }
};

// Reads `triples`, `interactions`, ... plus `checksum.<key>` from a flat config.
inline DatasetManifest manifest_from_config(const Config& c) {
  DatasetManifest m;
  m.name = c.get_string("name", m.name);
  m.interaction_relation = c.get_string("interaction_relation", m.interaction_relation);
  m.kcore = c.get_size("kcore", 0);
  for (const std::string& key : kManifestFiles) {
    if (c.has(key)) m.paths[key] = c.get_path(key);
    if (c.has("checksum." + key)) m.checksums[key] = c.get_string("checksum." + key);
  }
  if (m.path("triples").empty() && m.path("interactions").empty())
    throw Error(ErrorCode::config_missing, "dataset config names neither triples nor interactions");
  return m;
}

inline std::string file_checksum(const std::string& path) { return to_hex(fnv1a64(read_file_bytes(path))); }

inline void verify_checksums(const DatasetManifest& m) {
  for (const auto& [key, expected] : m.checksums) {
    const std::string p = m.path(key);
    if (p.empty()) throw Error(ErrorCode::checksum_mismatch, "checksum given for absent file '" + key + "'");
    const std::string actual = file_checksum(p);
    if (actual != expected)
      throw Error(ErrorCode::checksum_mismatch, p + ": expected " + expected + ", got " + actual);
  }
}

namespace detail {

// Calls fn(line_no, fields) for every non-empty, non-comment line.
template <typename Fn>
void for_each_tsv(const std::string& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    for (const std::string& f : fields)
      if (f.empty()) throw ParseError(path, n, "empty field");
    fn(n, fields);
  }
}

}  // namespace detail

inline std::vector<RawTriple> read_triples(const std::string& path) {
  std::vector<RawTriple> out;
  detail::for_each_tsv(path, [&](std::size_t n, const std::vector<std::string>& f) {
    if (f.size() != 3)
      throw ParseError(path, n, "expected 3 tab-separated fields, got " + std::to_string(f.size()));
    out.push_back({f[0], f[1], f[2]});
  });
  return out;
}

struct RawInteraction {
  std::string user;
  std::string item;
  std::optional<std::string> timestamp;
};

inline std::vector<RawInteraction> read_interactions(const std::string& path) {
  std::vector<RawInteraction> out;
  detail::for_each_tsv(path, [&](std::size_t n, const std::vector<std::string>& f) {
    if (f.size() != 2 && f.size() != 3)
      throw ParseError(path, n, "expected 2 or 3 tab-separated fields, got " + std::to_string(f.size()));
    out.push_back({f[0], f[1], f.size() == 3 ? std::optional<std::string>(f[2]) : std::nullopt});
  });
  return out;
}

inline std::vector<std::string> read_labels(const std::string& path) {
  std::vector<std::string> out;
  detail::for_each_tsv(path, [&](std::size_t n, const std::vector<std::string>& f) {
    if (f.size() != 1) throw ParseError(path, n, "expected one label per line");
    out.push_back(f[0]);
  });
  return out;
}

// Repeatedly drops users and items with fewer than k interactions.
inline std::vector<RawInteraction> kcore_filter(std::vector<RawInteraction> pairs, std::size_t k) {
  if (k <= 1) return pairs;
  while (true) {
    std::map<std::string, std::size_t> users, items;
    for (const RawInteraction& p : pairs) {
      ++users[p.user];
      ++items[p.item];
    }
    const std::size_t before = pairs.size();
    std::erase_if(pairs, [&](const RawInteraction& p) { return users[p.user] < k || items[p.item] < k; });
    if (pairs.size() == before) return pairs;
  }
}

struct Dataset {
  DatasetManifest manifest;
  KnowledgeGraph graph;
  std::vector<Review> reviews;
  TemplateSet templates;
};

// Interactions become triples under the interaction relation, appended after the KG triples.
inline Dataset ingest(const DatasetManifest& m) {
  verify_checksums(m);
  std::vector<RawTriple> raw;
  if (!m.path("triples").empty()) raw = read_triples(m.path("triples"));

  std::vector<RawInteraction> pairs;
  if (!m.path("interactions").empty()) pairs = read_interactions(m.path("interactions"));
  std::set<std::string> dropped;
  if (m.kcore > 1) {
    std::set<std::string> before, after;
    for (const RawInteraction& p : pairs) before.insert({p.user, p.item});
    pairs = kcore_filter(std::move(pairs), m.kcore);
    for (const RawInteraction& p : pairs) after.insert({p.user, p.item});
    std::set_difference(before.begin(), before.end(), after.begin(), after.end(),
                        std::inserter(dropped, dropped.end()));
    std::erase_if(raw, [&](const RawTriple& t) { return dropped.contains(t.head) || dropped.contains(t.tail); });
  }
  for (const RawInteraction& p : pairs) raw.push_back({p.user, m.interaction_relation, p.item});

  std::vector<std::string> users, items;
  if (!m.path("users").empty()) users = read_labels(m.path("users"));
  if (!m.path("items").empty()) items = read_labels(m.path("items"));
  std::erase_if(users, [&](const std::string& l) { return dropped.contains(l); });
  std::erase_if(items, [&](const std::string& l) { return dropped.contains(l); });

  GraphOptions options;
  options.interaction_relation = m.interaction_relation;
  Dataset d{m, build_graph(raw, users, items, options), {}, default_templates()};
  if (!m.path("reviews").empty()) d.reviews = load_reviews(m.path("reviews"));
  if (!m.path("templates").empty()) d.templates = load_templates(m.path("templates"));
  return d;
}

inline std::string format_stats(const std::string& name, const GraphStats& s) {
  std::ostringstream os;
  char buf[96];
  auto row = [&](const char* label, std::size_t v) {
    std::snprintf(buf, sizeof buf, "%-22s %10zu\n", label, v);
    os << buf;
  };
  os << "dataset " << name << '\n';
  row("users", s.users);
  row("items", s.items);
  row("auxiliary entities", s.auxiliaries);
  row("entities", s.entities);
  row("interactions", s.interactions);
  row("relations", s.relations);
  row("relations (with inv)", s.relations_total);
  row("kg triples", s.kg_triples);
  row("triples (with inv)", s.triples_total);
  return os.str();
}

}  // namespace profkg
