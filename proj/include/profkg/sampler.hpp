#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "profkg/error.hpp"
#include "profkg/graph.hpp"
#include "profkg/random.hpp"

namespace profkg {

struct BprTriplet {
  EntityId user;
  EntityId positive;
  EntityId negative;
};

struct Batch {
  std::vector<BprTriplet> triplets;
};

// Every item a user interacted with in any split; negatives must avoid all of them.
class InteractionIndex {
 public:
  InteractionIndex(const KnowledgeGraph& g, std::span<const Interaction> all)
      : items_(g.items()), seen_(g.entity_count()) {
    for (const Interaction& p : all) seen_[index_of(p.user)].push_back(p.item);
    for (auto& v : seen_) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }

  bool interacted(EntityId u, EntityId v) const {
    const auto& s = seen_[index_of(u)];
    return std::binary_search(s.begin(), s.end(), v);
  }
  const std::vector<EntityId>& items() const { return items_; }
  std::size_t count(EntityId u) const { return seen_[index_of(u)].size(); }

 private:
  std::vector<EntityId> items_;
  std::vector<std::vector<EntityId>> seen_;
};

// One uniformly drawn non-interacted item per positive pair (rejection sampling).
inline Batch sample_negatives(std::span<const Interaction> positives, const InteractionIndex& index, Rng& rng) {
  Batch batch;
  batch.triplets.reserve(positives.size());
  const auto& items = index.items();
  for (const Interaction& p : positives) {
    if (index.count(p.user) >= items.size())
      throw Error(ErrorCode::no_negative_available, "user interacted with every item");
    EntityId neg;
    do {
      neg = items[uniform_index(rng, items.size())];
    } while (index.interacted(p.user, neg));
    batch.triplets.push_back({p.user, p.item, neg});
  }
  return batch;
}

inline Batch sample_negatives(std::span<const Interaction> positives, const InteractionIndex& index,
                              std::uint64_t seed) {
  Rng rng = make_rng(seed, "negatives");
  return sample_negatives(positives, index, rng);
}

}  // namespace profkg
