#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "profkg/graph.hpp"
#include "profkg/profiles.hpp"
#include "profkg/random.hpp"
#include "profkg/templates.hpp"

namespace profkg {

enum class PartKind { description, review, related_profile };

inline const char* to_string(PartKind k) {
  switch (k) {
    case PartKind::description: return "description";
    case PartKind::review: return "review";
    case PartKind::related_profile: return "related-profile";
  }
  return "?";
}

struct PromptPart {
  PartKind kind;
  std::string text;
  std::optional<EntityId> source;  // set for related-profile parts
};

struct PromptBundle {
  std::string system;
  std::string user_message;
  std::vector<PromptPart> parts;
};

struct PromptLimits {
  std::size_t max_reviews = 5;
  std::size_t max_related = 8;
  std::size_t max_twohop_items = 5;
  std::size_t max_twohop_lines = 5;
};

// Per-entity lookups the prompt builders need, computed once per graph.
class ProfileContext {
 public:
  ProfileContext(const KnowledgeGraph& g, const std::vector<Review>& reviews)
      : graph_(&g), facts_(g.entity_count()), user_items_(g.entity_count()),
        item_reviews_(g.entity_count()), user_reviews_(g.entity_count()) {
    for (const Triple& t : g.original_triples()) {
      if (t.relation == g.interaction_relation()) continue;
      facts_[index_of(t.head)].push_back(t);
      if (t.tail != t.head) facts_[index_of(t.tail)].push_back(t);
      if (g.is_item(t.head)) members_[{t.relation, t.tail}].push_back(t.head);
    }
    std::set<Interaction> known;
    for (const Interaction& p : g.interactions()) {
      user_items_[index_of(p.user)].push_back(p.item);
      known.insert(p);
    }
    for (const Review& r : reviews) {
      auto u = g.find_entity(r.user_label);
      auto v = g.find_entity(r.item_label);
      // Reviews of interactions absent from this graph (held-out pairs) are dropped.
      if (u && v && g.is_user(*u) && !known.contains({*u, *v})) continue;
      if (v && g.is_item(*v)) item_reviews_[index_of(*v)].push_back(r.text);
      if (u && g.is_user(*u)) user_reviews_[index_of(*u)].push_back(r.text);
    }
  }

  const KnowledgeGraph& graph() const { return *graph_; }
  // Original non-interaction triples touching e, in insertion order.
  const std::vector<Triple>& facts(EntityId e) const { return facts_[index_of(e)]; }
  const std::vector<EntityId>& interacted_items(EntityId u) const { return user_items_[index_of(u)]; }
  const std::vector<std::string>& item_reviews(EntityId v) const { return item_reviews_[index_of(v)]; }
  const std::vector<std::string>& user_reviews(EntityId u) const { return user_reviews_[index_of(u)]; }
  // Items h with (h, r, e).
  const std::vector<EntityId>& members(RelationId r, EntityId e) const {
    static const std::vector<EntityId> none;
    auto it = members_.find({r, e});
    return it == members_.end() ? none : it->second;
  }

 private:
  const KnowledgeGraph* graph_;
  std::vector<std::vector<Triple>> facts_;
  std::map<std::pair<RelationId, EntityId>, std::vector<EntityId>> members_;
  std::vector<std::vector<EntityId>> user_items_;
  std::vector<std::vector<std::string>> item_reviews_;
  std::vector<std::vector<std::string>> user_reviews_;
};

inline std::string join_parts(const std::vector<PromptPart>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i].text;
  }
  return out;
}

// Template-mode profile text: the rendered parts joined by single spaces.
inline std::string template_text(const PromptBundle& bundle) { return join_parts(bundle.parts, " "); }

namespace detail {

inline std::string fact_sentence(const KnowledgeGraph& g, const TemplateSet& tset, const Triple& t) {
  return render_template(tset, g.relation_label(t.relation), Hop::one, g.entity_label(t.head),
                         g.entity_label(t.tail));
}

// Entity-side phrasing when `e` is the tail.
inline std::string entity_side_sentence(const KnowledgeGraph& g, const TemplateSet& tset,
                                        const Triple& t, EntityId e) {
  if (t.tail == e && t.head != e)
    return render_template(tset, g.relation_label(t.relation), Hop::one_reversed,
                           g.entity_label(t.head), g.entity_label(e));
  return fact_sentence(g, tset, t);
}

inline void finish(PromptBundle& b, const std::string& system, const std::string& fallback) {
  if (b.parts.empty()) b.parts.push_back({PartKind::description, fallback, std::nullopt});
  b.system = system;
  b.user_message = join_parts(b.parts, "\n");
}

inline const std::string& dependency_text(const ProfileStore& store, const KnowledgeGraph& g,
                                          EntityId target, EntityId dep) {
  const Profile* p = store.find(dep);
  if (!p)
    throw Error(ErrorCode::missing_dependency_profile,
                "profile of '" + g.entity_label(target) + "' needs item '" + g.entity_label(dep) +
                    "' to be profiled first");
  return p->text;
}

}  // namespace detail

// Builds the prompt for one entity. Item prompts carry 1-hop/2-hop descriptions and
// sampled reviews; auxiliary prompts carry entity-side descriptions and related item
// profiles; user prompts carry interacted item profiles and the user's reviews.
inline PromptBundle build_prompt(Role kind, EntityId target, const ProfileContext& ctx,
                                 const TemplateSet& tset, const ProfileStore& store,
                                 const PromptLimits& limits, std::uint64_t seed) {
  const KnowledgeGraph& g = ctx.graph();
  if (g.role(target) != kind)
    throw Error(ErrorCode::role_mismatch, "entity '" + g.entity_label(target) + "' is a " +
                                              to_string(g.role(target)) + ", not a " + to_string(kind));
  const std::string& label = g.entity_label(target);
  Rng rng = make_rng(seed, "prompt:" + label);
  PromptBundle b;

  switch (kind) {
    case Role::item: {
      std::vector<const Triple*> outgoing;
      for (const Triple& t : ctx.facts(target)) {
        b.parts.push_back({PartKind::description, detail::fact_sentence(g, tset, t), std::nullopt});
        if (t.head == target && t.tail != target) outgoing.push_back(&t);
      }
      TemplateSet capped = tset;
      capped.max_twohop_items = std::min(tset.max_twohop_items, limits.max_twohop_items);
      std::size_t lines = 0;
      for (const Triple* t : outgoing) {
        if (lines >= limits.max_twohop_lines) break;
        std::vector<EntityId> others;
        for (EntityId h : ctx.members(t->relation, t->tail))
          if (h != target) others.push_back(h);
        if (others.empty()) continue;
        std::vector<std::string> labels;
        for (EntityId h : sample_elements(rng, others, capped.max_twohop_items))
          labels.push_back(g.entity_label(h));
        b.parts.push_back({PartKind::description,
                           render_template(capped, g.relation_label(t->relation), Hop::two, label,
                                           g.entity_label(t->tail), labels),
                           std::nullopt});
        ++lines;
      }
      for (const std::string& r : sample_elements(rng, ctx.item_reviews(target), limits.max_reviews))
        b.parts.push_back({PartKind::review, r, std::nullopt});
      detail::finish(b, tset.item_instruction, label + " is an item.");
      break;
    }
    case Role::auxiliary: {
      std::vector<EntityId> related;
      std::map<EntityId, const Triple*> via;
      for (const Triple& t : ctx.facts(target)) {
        EntityId other = t.head == target ? t.tail : t.head;
        if (g.is_item(other)) {
          if (via.emplace(other, &t).second) related.push_back(other);
        } else {
          b.parts.push_back({PartKind::description, detail::fact_sentence(g, tset, t), std::nullopt});
        }
      }
      auto chosen = sample_elements(rng, related, limits.max_related);
      for (EntityId h : chosen)
        b.parts.push_back(
            {PartKind::description, detail::entity_side_sentence(g, tset, *via[h], target), std::nullopt});
      for (EntityId h : chosen)
        b.parts.push_back({PartKind::related_profile, detail::dependency_text(store, g, target, h), h});
      detail::finish(b, tset.entity_instruction, label + " is an entity.");
      break;
    }
    case Role::user: {
      for (EntityId v : sample_elements(rng, ctx.interacted_items(target), limits.max_related))
        b.parts.push_back({PartKind::related_profile, detail::dependency_text(store, g, target, v), v});
      for (const std::string& r : sample_elements(rng, ctx.user_reviews(target), limits.max_reviews))
        b.parts.push_back({PartKind::review, r, std::nullopt});
      detail::finish(b, tset.user_instruction, label + " is a user.");
      break;
    }
  }
  return b;
}

}  // namespace profkg
