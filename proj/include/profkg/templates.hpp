#pragma once

#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "profkg/error.hpp"

namespace profkg {

inline constexpr std::string_view kItemPlaceholder = "[ITEM]";
inline constexpr std::string_view kEntityPlaceholder = "[ENTITY]";
inline constexpr std::string_view kItemsPlaceholder = "[ITEMS]";
inline constexpr std::string_view kRelationPlaceholder = "[RELATION]";

enum class Hop { one, two, one_reversed };

struct RelationTemplates {
  std::string one_hop;           // [ITEM], [ENTITY]
  std::string two_hop;           // [ENTITY], [ITEMS]
  std::string one_hop_reversed;  // [ENTITY], [ITEM]
};

struct TemplateSet {
  std::map<std::string, RelationTemplates> relations;
  // Used for relations without an entry; may also mention [RELATION].
  RelationTemplates fallback{
      "[ITEM] is related to [ENTITY] via [RELATION].",
      "[ENTITY] is also related via [RELATION] to items such as [ITEMS].",
      "[ENTITY] is related to [ITEM] via [RELATION].",
  };
  std::string item_instruction;
  std::string entity_instruction;
  std::string user_instruction;
  std::size_t max_twohop_items = 5;
  std::string version = "1";

  const RelationTemplates& lookup(const std::string& relation) const {
    auto it = relations.find(relation);
    return it == relations.end() ? fallback : it->second;
  }
  bool has(const std::string& relation) const { return relations.contains(relation); }
};

namespace detail {

inline std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size()))
    ++n;
  return n;
}

inline void require_once(const std::string& where, std::string_view text,
                         std::string_view placeholder) {
  if (count_occurrences(text, placeholder) != 1)
    throw Error(ErrorCode::parse_error, where + " must contain " + std::string(placeholder) +
                                            " exactly once: \"" + std::string(text) + "\"");
}

// Single left-to-right pass; substituted text is never rescanned.
inline std::string substitute(std::string_view text,
                              std::span<const std::pair<std::string_view, std::string_view>> subs) {
  std::string out;
  out.reserve(text.size() + 64);
  std::size_t i = 0;
  while (i < text.size()) {
    bool replaced = false;
    if (text[i] == '[') {
      for (const auto& [key, value] : subs) {
        if (text.compare(i, key.size(), key) == 0) {
          out.append(value);
          i += key.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(text[i++]);
  }
  return out;
}

}  // namespace detail

inline void validate(const RelationTemplates& t, const std::string& name) {
  detail::require_once(name + ".one_hop", t.one_hop, kItemPlaceholder);
  detail::require_once(name + ".one_hop", t.one_hop, kEntityPlaceholder);
  detail::require_once(name + ".two_hop", t.two_hop, kEntityPlaceholder);
  detail::require_once(name + ".two_hop", t.two_hop, kItemsPlaceholder);
  detail::require_once(name + ".one_hop_reversed", t.one_hop_reversed, kEntityPlaceholder);
  detail::require_once(name + ".one_hop_reversed", t.one_hop_reversed, kItemPlaceholder);
}

inline void validate(const TemplateSet& set) {
  for (const auto& [name, t] : set.relations) validate(t, name);
  validate(set.fallback, "fallback");
}

// Renders one relation template. Two-hop joins at most max_twohop_items labels with ", ".
inline std::string render_template(const TemplateSet& set, const std::string& relation, Hop hop,
                                   std::string_view item_label, std::string_view entity_label,
                                   std::span<const std::string> item_labels = {}) {
  const RelationTemplates& t = set.lookup(relation);
  std::string items;
  switch (hop) {
    case Hop::one:
    case Hop::one_reversed:
      if (item_label.empty()) throw Error(ErrorCode::missing_label, "[ITEM] for " + relation);
      if (entity_label.empty()) throw Error(ErrorCode::missing_label, "[ENTITY] for " + relation);
      break;
    case Hop::two: {
      if (entity_label.empty()) throw Error(ErrorCode::missing_label, "[ENTITY] for " + relation);
      if (item_labels.empty()) throw Error(ErrorCode::missing_label, "[ITEMS] for " + relation);
      const std::size_t n = std::min(item_labels.size(), set.max_twohop_items);
      for (std::size_t i = 0; i < n; ++i) {
        if (item_labels[i].empty()) throw Error(ErrorCode::missing_label, "[ITEMS] entry");
        if (i) items += ", ";
        items += item_labels[i];
      }
      break;
    }
  }
  const std::string& text =
      hop == Hop::one ? t.one_hop : hop == Hop::two ? t.two_hop : t.one_hop_reversed;
  const std::pair<std::string_view, std::string_view> subs[] = {
      {kItemsPlaceholder, items},
      {kItemPlaceholder, item_label},
      {kEntityPlaceholder, entity_label},
      {kRelationPlaceholder, relation},
  };
  return detail::substitute(text, subs);
}

// Built-in book/movie relation templates plus entity-side reversed forms.
inline TemplateSet default_templates() {
  TemplateSet s;
  auto add = [&](const char* rel, const char* one, const char* two, const char* rev) {
    s.relations[rel] = RelationTemplates{one, two, rev};
  };
  add("subject", "[ITEM] is about [ENTITY].",
      "[ENTITY] also appears as a subject in items such as [ITEMS].",
      "[ENTITY] is the subject of [ITEM].");
  add("author", "[ITEM] lists [ENTITY] as its author.",
      "[ENTITY] also wrote other works like [ITEMS].", "[ENTITY] is the author of [ITEM].");
  add("literaryGenre", "[ITEM] belongs to the literary genre [ENTITY].",
      "The literary genre '[ENTITY]' also includes items such as [ITEMS].",
      "[ENTITY] is the literary genre of [ITEM].");
  add("subsequentWork", "[ITEM] is followed by [ENTITY].",
      "[ENTITY] is followed by items such as [ITEMS].", "[ENTITY] follows [ITEM].");
  add("previousWork", "[ITEM] comes after [ENTITY].",
      "[ENTITY] is preceded by works like [ITEMS].", "[ENTITY] comes before [ITEM].");
  add("series", "[ITEM] is part of the series called [ENTITY].",
      "The series '[ENTITY]' also includes items such as [ITEMS].",
      "The series [ENTITY] includes [ITEM].");
  add("director", "[ITEM] was directed by [ENTITY].",
      "[ENTITY] also directed other items like [ITEMS].", "[ENTITY] directed [ITEM].");
  add("musicComposer", "[ITEM] features music composed by [ENTITY].",
      "[ENTITY] also composed music for works such as [ITEMS].",
      "[ENTITY] composed the music of [ITEM].");
  add("producer", "[ITEM] was produced by [ENTITY].",
      "[ENTITY] also produced items like [ITEMS].", "[ENTITY] produced [ITEM].");
  add("starring", "[ITEM] stars [ENTITY].",
      "[ENTITY] also starred in items such as [ITEMS].", "[ENTITY] stars in [ITEM].");
  add("writer", "[ITEM] was written by [ENTITY].",
      "[ENTITY] also contributed to writing items like [ITEMS].", "[ENTITY] wrote [ITEM].");
  add("genre", "[ITEM] is categorized under the genre [ENTITY].",
      "The genre '[ENTITY]' also includes items such as [ITEMS].",
      "[ENTITY] is the genre of [ITEM].");
  add("composer", "[ITEM] includes compositions by [ENTITY].",
      "[ENTITY] also composed other items like [ITEMS].",
      "[ENTITY] contributed compositions to [ITEM].");
  add("creator", "[ITEM] was created by [ENTITY].",
      "[ENTITY] also created works such as [ITEMS].", "[ENTITY] created [ITEM].");
  add("executiveProducer", "[ITEM] had [ENTITY] as executive producer.",
      "[ENTITY] also served as executive producer for items like [ITEMS].",
      "[ENTITY] was executive producer of [ITEM].");
  add("notableWork", "[ITEM] is best known for [ENTITY].",
      "[ENTITY] is also notable in works such as [ITEMS].",
      "[ENTITY] is a notable work of [ITEM].");
  add("award", "[ITEM] received the award titled [ENTITY].",
      "Items that received the '[ENTITY]' award also include [ITEMS].",
      "[ENTITY] was awarded to [ITEM].");
  add("portrayer", "[ITEM] features a character portrayed by [ENTITY].",
      "[ENTITY] also portrayed characters in items such as [ITEMS].",
      "[ENTITY] portrays a character in [ITEM].");
  add("album", "[ITEM] is included in the album [ENTITY].",
      "The album '[ENTITY]' also contains items such as [ITEMS].",
      "The album [ENTITY] contains [ITEM].");
  add("artist", "[ITEM] features a performance by [ENTITY].",
      "[ENTITY] also performed in items like [ITEMS].", "[ENTITY] performs in [ITEM].");

  s.item_instruction =
      "You are profiling an item for a recommender system. Using the facts and reviews below, "
      "describe the item, add well-known background knowledge, and explain which users would "
      "enjoy it and why.";
  s.entity_instruction =
      "You are profiling a knowledge-graph entity (for example a genre, author, or director). "
      "Using the related item profiles below, describe the entity and explain which users "
      "prefer items connected to it and why.";
  s.user_instruction =
      "You are profiling a user for a recommender system. Using the profiles of items the user "
      "interacted with and the user's own reviews, summarize the user's preferences from both "
      "the item and the entity perspective, with reasons.";
  return s;
}

inline nlohmann::json to_json(const TemplateSet& s) {
  nlohmann::json j;
  j["version"] = s.version;
  j["max_twohop_items"] = s.max_twohop_items;
  j["instructions"] = {{"item", s.item_instruction},
                       {"entity", s.entity_instruction},
                       {"user", s.user_instruction}};
  auto rel = [](const RelationTemplates& t) {
    return nlohmann::json{
        {"one_hop", t.one_hop}, {"two_hop", t.two_hop}, {"one_hop_reversed", t.one_hop_reversed}};
  };
  j["fallback"] = rel(s.fallback);
  j["relations"] = nlohmann::json::object();
  for (const auto& [name, t] : s.relations) j["relations"][name] = rel(t);
  return j;
}

// Missing keys keep the built-in defaults; relations listed in the file are added or replaced.
inline TemplateSet templates_from_json(const nlohmann::json& j) {
  TemplateSet s = default_templates();
  try {
    if (j.contains("version")) s.version = j.at("version").get<std::string>();
    if (j.contains("max_twohop_items")) s.max_twohop_items = j.at("max_twohop_items").get<std::size_t>();
    if (j.contains("instructions")) {
      const auto& in = j.at("instructions");
      if (in.contains("item")) s.item_instruction = in.at("item").get<std::string>();
      if (in.contains("entity")) s.entity_instruction = in.at("entity").get<std::string>();
      if (in.contains("user")) s.user_instruction = in.at("user").get<std::string>();
    }
    auto rel = [](const nlohmann::json& r) {
      return RelationTemplates{r.at("one_hop").get<std::string>(), r.at("two_hop").get<std::string>(),
                               r.at("one_hop_reversed").get<std::string>()};
    };
    if (j.contains("fallback")) s.fallback = rel(j.at("fallback"));
    if (j.contains("relations"))
      for (const auto& [name, r] : j.at("relations").items()) s.relations[name] = rel(r);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("templates: ") + e.what());
  }
  validate(s);
  return s;
}

inline TemplateSet load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open templates file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, path + ": " + e.what());
  }
  return templates_from_json(j);
}

inline void save_templates(const TemplateSet& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  out << to_json(s).dump(2) << '\n';
}

}  // namespace profkg
