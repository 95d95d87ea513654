#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "profkg/error.hpp"

namespace profkg {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};

constexpr std::size_t index_of(EntityId e) { return static_cast<std::size_t>(e); }
constexpr std::size_t index_of(RelationId r) { return static_cast<std::size_t>(r); }
constexpr EntityId entity_at(std::size_t i) { return static_cast<EntityId>(i); }
constexpr RelationId relation_at(std::size_t i) { return static_cast<RelationId>(i); }

enum class Role : std::uint8_t { user, item, auxiliary };

inline const char* to_string(Role role) {
  switch (role) {
    case Role::user: return "user";
    case Role::item: return "item";
    case Role::auxiliary: return "auxiliary";
  }
  return "?";
}

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;
  friend bool operator==(const Triple&, const Triple&) = default;
};

struct Neighbor {
  RelationId relation;
  EntityId tail;
  std::uint32_t triple;  // position in KnowledgeGraph::triples()
};

struct Interaction {
  EntityId user;
  EntityId item;
  friend bool operator==(const Interaction&, const Interaction&) = default;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

struct RawTriple {
  std::string head;
  std::string relation;
  std::string tail;
};

// Dense label <-> id map; ids follow insertion order.
class Vocabulary {
 public:
  std::uint32_t add(const std::string& label) {
    auto [it, inserted] = index_.try_emplace(label, static_cast<std::uint32_t>(labels_.size()));
    if (inserted) labels_.push_back(label);
    return it->second;
  }

  std::optional<std::uint32_t> find(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& label) const { return index_.contains(label); }
  const std::string& label(std::size_t id) const { return labels_.at(id); }
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct GraphOptions {
  bool add_inverse = true;
  std::string interaction_relation = "interact";
  // When false, every triple label must appear in `declared_entities` or a role list.
  bool auto_register = true;
  std::vector<std::string> declared_entities;
};

struct GraphStats {
  std::size_t entities = 0;
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t auxiliaries = 0;
  std::size_t relations = 0;        // original relation types
  std::size_t relations_total = 0;  // including reverse relations
  std::size_t interactions = 0;
  std::size_t kg_triples = 0;  // original triples that are not interactions
  std::size_t triples_total = 0;
  std::size_t self_loops = 0;
  bool inverse_augmented = false;
};

// Immutable after construction; all queries are const and thread-safe.
class KnowledgeGraph {
 public:
  std::size_t entity_count() const { return entities_.size(); }
  std::size_t relation_count() const { return relations_.size(); }
  std::size_t original_relation_count() const { return original_relation_count_; }

  const std::string& entity_label(EntityId e) const { return entities_.label(check(e)); }
  const std::string& relation_label(RelationId r) const { return relations_.label(index_of(r)); }
  const Vocabulary& entity_vocabulary() const { return entities_; }
  const Vocabulary& relation_vocabulary() const { return relations_; }

  std::optional<EntityId> find_entity(const std::string& label) const {
    if (auto id = entities_.find(label)) return entity_at(*id);
    return std::nullopt;
  }
  std::optional<RelationId> find_relation(const std::string& label) const {
    if (auto id = relations_.find(label)) return relation_at(*id);
    return std::nullopt;
  }

  std::span<const Triple> triples() const { return triples_; }
  std::span<const Triple> original_triples() const {
    return std::span<const Triple>(triples_).first(original_triple_count_);
  }

  Role role(EntityId e) const { return roles_[check(e)]; }
  bool is_user(EntityId e) const { return role(e) == Role::user; }
  bool is_item(EntityId e) const { return role(e) == Role::item; }
  const std::vector<EntityId>& users() const { return users_; }
  const std::vector<EntityId>& items() const { return items_; }
  std::vector<EntityId> auxiliaries() const {
    std::vector<EntityId> out;
    for (std::size_t i = 0; i < roles_.size(); ++i)
      if (roles_[i] == Role::auxiliary) out.push_back(entity_at(i));
    return out;
  }

  RelationId interaction_relation() const { return interaction_relation_; }
  bool is_interaction(RelationId r) const {
    return r == interaction_relation_ || (inverse_of_[index_of(r)] == interaction_relation_ &&
                                          is_reverse_[index_of(r)]);
  }
  bool is_reverse_relation(RelationId r) const { return is_reverse_[index_of(r)]; }
  // Reverse relation of an original one (and vice versa); nullopt without augmentation.
  std::optional<RelationId> inverse_of(RelationId r) const {
    if (!inverse_augmented_) return std::nullopt;
    return inverse_of_[index_of(r)];
  }
  bool inverse_augmented() const { return inverse_augmented_; }

  // Outgoing (relation, tail) pairs in triple insertion order.
  std::span<const Neighbor> neighbors(EntityId h) const {
    std::size_t i = check(h);
    return std::span<const Neighbor>(edges_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
  }
  std::size_t degree(EntityId h) const { return neighbors(h).size(); }

  // Unique (user, item) pairs of the original interaction triples, first-seen order.
  const std::vector<Interaction>& interactions() const { return interactions_; }

  GraphStats stats() const {
    GraphStats s;
    s.entities = entity_count();
    s.users = users_.size();
    s.items = items_.size();
    s.auxiliaries = s.entities - s.users - s.items;
    s.relations = original_relation_count_;
    s.relations_total = relation_count();
    s.interactions = interactions_.size();
    for (const Triple& t : original_triples())
      if (t.relation != interaction_relation_) ++s.kg_triples;
    s.triples_total = triples_.size();
    s.self_loops = self_loops_;
    s.inverse_augmented = inverse_augmented_;
    return s;
  }

  // Same vocabulary and roles; interaction triples restricted to `keep`.
  KnowledgeGraph with_interactions(std::span<const Interaction> keep) const {
    std::set<Interaction> allowed(keep.begin(), keep.end());
    KnowledgeGraph g;
    g.entities_ = entities_;
    g.roles_ = roles_;
    g.users_ = users_;
    g.items_ = items_;
    g.interaction_relation_ = interaction_relation_;
    for (std::size_t r = 0; r < original_relation_count_; ++r) g.relations_.add(relations_.label(r));
    g.original_relation_count_ = original_relation_count_;
    std::vector<Triple> originals;
    for (const Triple& t : original_triples()) {
      if (t.relation == interaction_relation_ && !allowed.contains({t.head, t.tail})) continue;
      originals.push_back(t);
    }
    g.finalize(std::move(originals), inverse_augmented_);
    return g;
  }

  friend KnowledgeGraph build_graph(std::span<const RawTriple>, std::span<const std::string>,
                                    std::span<const std::string>, const GraphOptions&);

 private:
  std::size_t check(EntityId e) const {
    if (index_of(e) >= entities_.size())
      throw Error(ErrorCode::invalid_entity, "entity id " + std::to_string(index_of(e)));
    return index_of(e);
  }

  void finalize(std::vector<Triple> originals, bool add_inverse) {
    original_triple_count_ = originals.size();
    triples_ = std::move(originals);
    inverse_augmented_ = add_inverse;
    self_loops_ = 0;
    for (const Triple& t : triples_)
      if (t.head == t.tail) ++self_loops_;

    is_reverse_.assign(original_relation_count_, false);
    inverse_of_.resize(original_relation_count_);
    for (std::size_t r = 0; r < original_relation_count_; ++r) inverse_of_[r] = relation_at(r);
    if (add_inverse) {
      for (std::size_t r = 0; r < original_relation_count_; ++r) {
        std::string label = relations_.label(r) + "_inv";
        while (relations_.contains(label)) label += "_";
        RelationId rev = relation_at(relations_.add(label));
        inverse_of_[r] = rev;
        inverse_of_.push_back(relation_at(r));
        is_reverse_.push_back(true);
      }
      for (std::size_t i = 0; i < original_triple_count_; ++i) {
        const Triple t = triples_[i];
        if (t.head == t.tail) continue;
        triples_.push_back({t.tail, inverse_of_[index_of(t.relation)], t.head});
      }
    }

    std::set<Interaction> seen;
    interactions_.clear();
    for (std::size_t i = 0; i < original_triple_count_; ++i) {
      const Triple& t = triples_[i];
      if (t.relation != interaction_relation_) continue;
      if (seen.insert({t.head, t.tail}).second) interactions_.push_back({t.head, t.tail});
    }

    const std::size_t n = entities_.size();
    offsets_.assign(n + 1, 0);
    for (const Triple& t : triples_) ++offsets_[index_of(t.head) + 1];
    for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] += offsets_[i];
    edges_.resize(triples_.size());
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t i = 0; i < triples_.size(); ++i) {
      const Triple& t = triples_[i];
      edges_[cursor[index_of(t.head)]++] = {t.relation, t.tail, static_cast<std::uint32_t>(i)};
    }
  }

  Vocabulary entities_;
  Vocabulary relations_;
  std::size_t original_relation_count_ = 0;
  std::vector<Triple> triples_;
  std::size_t original_triple_count_ = 0;
  std::vector<Role> roles_;
  std::vector<EntityId> users_;
  std::vector<EntityId> items_;
  RelationId interaction_relation_{};
  std::vector<RelationId> inverse_of_;
  std::vector<bool> is_reverse_;
  bool inverse_augmented_ = false;
  std::size_t self_loops_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<Neighbor> edges_;
  std::vector<Interaction> interactions_;
};

// Assigns dense ids in first-appearance order (triple heads/tails, then any declared
// users/items not seen in a triple). With empty role lists, roles are inferred from
// the interaction relation: heads are users, tails are items.
inline KnowledgeGraph build_graph(std::span<const RawTriple> raw,
                                  std::span<const std::string> user_labels,
                                  std::span<const std::string> item_labels,
                                  const GraphOptions& options = {}) {
  if (raw.empty()) throw Error(ErrorCode::empty_graph, "no triples");

  std::unordered_set<std::string> users(user_labels.begin(), user_labels.end());
  std::unordered_set<std::string> items(item_labels.begin(), item_labels.end());
  if (users.empty() && items.empty()) {
    for (const RawTriple& t : raw) {
      if (t.relation != options.interaction_relation) continue;
      users.insert(t.head);
      items.insert(t.tail);
    }
  }
  for (const std::string& u : users)
    if (items.contains(u)) throw Error(ErrorCode::overlapping_roles, "label '" + u + "'");

  std::unordered_set<std::string> declared;
  if (!options.auto_register) {
    declared.insert(options.declared_entities.begin(), options.declared_entities.end());
    declared.insert(users.begin(), users.end());
    declared.insert(items.begin(), items.end());
  }

  KnowledgeGraph g;
  auto entity = [&](const std::string& label, std::size_t line) {
    if (!options.auto_register && !declared.contains(label))
      throw Error(ErrorCode::unknown_label,
                  "'" + label + "' in triple " + std::to_string(line + 1));
    return entity_at(g.entities_.add(label));
  };

  std::vector<Triple> originals;
  originals.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const RawTriple& t = raw[i];
    EntityId h = entity(t.head, i);
    RelationId r = relation_at(g.relations_.add(t.relation));
    EntityId tl = entity(t.tail, i);
    originals.push_back({h, r, tl});
  }
  for (const std::string& u : user_labels) g.entities_.add(u);
  for (const std::string& v : item_labels) g.entities_.add(v);
  // Inferred roles come from triples, so they are already registered.

  g.interaction_relation_ = relation_at(g.relations_.add(options.interaction_relation));
  g.original_relation_count_ = g.relations_.size();

  g.roles_.assign(g.entities_.size(), Role::auxiliary);
  for (std::size_t i = 0; i < g.entities_.size(); ++i) {
    const std::string& label = g.entities_.label(i);
    if (users.contains(label)) {
      g.roles_[i] = Role::user;
      g.users_.push_back(entity_at(i));
    } else if (items.contains(label)) {
      g.roles_[i] = Role::item;
      g.items_.push_back(entity_at(i));
    }
  }
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const Triple& t = originals[i];
    if (t.relation != g.interaction_relation_) continue;
    if (g.roles_[index_of(t.head)] != Role::user || g.roles_[index_of(t.tail)] != Role::item)
      throw Error(ErrorCode::role_mismatch, "interaction triple " + std::to_string(i + 1) +
                                                " must link a user to an item");
  }

  g.finalize(std::move(originals), options.add_inverse);
  return g;
}

inline KnowledgeGraph build_graph(const std::vector<RawTriple>& raw,
                                  const std::vector<std::string>& users,
                                  const std::vector<std::string>& items,
                                  const GraphOptions& options = {}) {
  return build_graph(std::span<const RawTriple>(raw), std::span<const std::string>(users),
                     std::span<const std::string>(items), options);
}

}  // namespace profkg
