#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "profkg/error.hpp"
#include "profkg/graph.hpp"
#include "profkg/random.hpp"

namespace profkg {

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

struct InteractionSplit {
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::map<EntityId, std::vector<EntityId>> items_by_user(
    std::span<const Interaction> pairs) {
  std::map<EntityId, std::vector<EntityId>> out;
  for (const Interaction& p : pairs) out[p.user].push_back(p.item);
  return out;
}

}  // namespace detail

// Per-user split: floor(train*n) to train, floor(validation*n) to validation, the
// remainder to test, then items move to train until it holds at least one.
inline InteractionSplit split_interactions(const KnowledgeGraph& g, SplitRatios ratios = {},
                                           std::uint64_t seed = 0) {
  const double sum = ratios.train + ratios.validation + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.validation < 0 || ratios.test < 0)
    throw Error(ErrorCode::spec_invalid, "split ratios must be non-negative and sum to 1");

  auto by_user = detail::items_by_user(g.interactions());
  InteractionSplit split;
  split.seed = seed;
  Rng rng = make_rng(seed, "split");
  for (EntityId u : g.users()) {
    auto it = by_user.find(u);
    if (it == by_user.end())
      throw Error(ErrorCode::user_without_interactions, "user '" + g.entity_label(u) + "'");
    std::vector<EntityId> items = it->second;
    shuffle_in_place(rng, items);
    const std::size_t n = items.size();
    std::size_t n_train = static_cast<std::size_t>(std::floor(ratios.train * n + 1e-9));
    std::size_t n_val = static_cast<std::size_t>(std::floor(ratios.validation * n + 1e-9));
    n_val = std::min(n_val, n - n_train);
    if (n_train == 0) {
      n_train = 1;
      if (n_train + n_val > n) n_val = n - n_train;
    }
    for (std::size_t i = 0; i < n; ++i) {
      Interaction p{u, items[i]};
      if (i < n_train)
        split.train.push_back(p);
      else if (i < n_train + n_val)
        split.validation.push_back(p);
      else
        split.test.push_back(p);
    }
  }
  return split;
}

// Keeps round(ratio * n) of each user's interactions, never fewer than one.
inline std::vector<Interaction> downsample_interactions(std::span<const Interaction> pairs,
                                                        double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw Error(ErrorCode::spec_invalid, "interaction ratio must lie in (0, 1]");
  Rng rng = make_rng(seed, "downsample");
  std::vector<Interaction> out;
  for (auto& [user, items] : detail::items_by_user(pairs)) {
    std::size_t keep = static_cast<std::size_t>(std::llround(ratio * items.size()));
    keep = std::max<std::size_t>(keep, 1);
    for (EntityId v : sample_elements(rng, items, keep)) out.push_back({user, v});
  }
  return out;
}

}  // namespace profkg
