#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "profkg/error.hpp"
#include "profkg/graph.hpp"

namespace profkg {

enum class Provenance { template_text, llm };

inline const char* to_string(Provenance p) { return p == Provenance::llm ? "llm" : "template"; }

struct Profile {
  EntityId entity{};
  Role kind = Role::auxiliary;
  std::string text;
  Provenance provenance = Provenance::template_text;
  std::optional<std::string> model;
};

// One profile slot per entity, plus the order in which profiles were produced.
class ProfileStore {
 public:
  explicit ProfileStore(std::size_t entity_count = 0) : slots_(entity_count) {}

  void add(Profile p) {
    const std::size_t i = index_of(p.entity);
    if (i >= slots_.size()) throw Error(ErrorCode::invalid_entity, "profile for entity " + std::to_string(i));
    if (p.text.empty()) throw Error(ErrorCode::spec_invalid, "empty profile text for entity " + std::to_string(i));
    if (!slots_[i]) order_.push_back(p.entity);
    slots_[i] = std::move(p);
  }

  const Profile* find(EntityId e) const {
    const std::size_t i = index_of(e);
    return i < slots_.size() && slots_[i] ? &*slots_[i] : nullptr;
  }
  bool contains(EntityId e) const { return find(e) != nullptr; }
  const Profile& at(EntityId e) const {
    if (const Profile* p = find(e)) return *p;
    throw Error(ErrorCode::missing_dependency_profile, "no profile for entity " + std::to_string(index_of(e)));
  }

  std::size_t size() const { return order_.size(); }
  std::size_t entity_count() const { return slots_.size(); }
  bool complete() const { return order_.size() == slots_.size(); }
  const std::vector<EntityId>& order() const { return order_; }

  std::optional<std::size_t> generation_index(EntityId e) const {
    for (std::size_t i = 0; i < order_.size(); ++i)
      if (order_[i] == e) return i;
    return std::nullopt;
  }

 private:
  std::vector<std::optional<Profile>> slots_;
  std::vector<EntityId> order_;
};

inline nlohmann::json to_json(const Profile& p, const KnowledgeGraph& g) {
  nlohmann::json j{{"entity_label", g.entity_label(p.entity)},
                   {"kind", to_string(p.kind)},
                   {"provenance", to_string(p.provenance)},
                   {"text", p.text}};
  if (p.model) j["model"] = *p.model;
  return j;
}

inline Profile profile_from_json(const nlohmann::json& j, const KnowledgeGraph& g) {
  const std::string label = j.at("entity_label").get<std::string>();
  auto e = g.find_entity(label);
  if (!e) throw Error(ErrorCode::unknown_label, "profile for unknown entity '" + label + "'");
  Profile p;
  p.entity = *e;
  p.kind = g.role(*e);
  const std::string kind = j.at("kind").get<std::string>();
  if (kind != to_string(p.kind))
    throw Error(ErrorCode::role_mismatch, "profile of '" + label + "' has kind " + kind);
  p.provenance = j.at("provenance").get<std::string>() == "llm" ? Provenance::llm : Provenance::template_text;
  p.text = j.at("text").get<std::string>();
  if (j.contains("model")) p.model = j.at("model").get<std::string>();
  return p;
}

// Line-delimited records in generation order.
inline void save_profiles(const ProfileStore& store, const KnowledgeGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  for (EntityId e : store.order()) out << to_json(store.at(e), g).dump() << '\n';
}

inline ProfileStore load_profiles(const KnowledgeGraph& g, const std::string& path,
                                  bool tolerate_partial_last_line = false) {
  ProfileStore store(g.entity_count());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open profiles file " + path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      store.add(profile_from_json(nlohmann::json::parse(line), g));
    } catch (const nlohmann::json::exception& e) {
      if (tolerate_partial_last_line && in.peek() == std::char_traits<char>::eof()) break;
      throw ParseError(path, n, e.what());
    }
  }
  return store;
}

struct Review {
  std::string user_label;
  std::string item_label;
  std::string text;
};

inline std::vector<Review> load_reviews(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open reviews file " + path);
  std::vector<Review> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("user_label").get<std::string>(), j.at("item_label").get<std::string>(),
                     j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path, n, e.what());
    }
  }
  return out;
}

inline void save_reviews(const std::vector<Review>& reviews, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  for (const Review& r : reviews)
    out << nlohmann::json{{"user_label", r.user_label}, {"item_label", r.item_label}, {"text", r.text}}.dump()
        << '\n';
}

}  // namespace profkg
