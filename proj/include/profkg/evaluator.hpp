#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "profkg/error.hpp"
#include "profkg/graph.hpp"
#include "profkg/model.hpp"
#include "profkg/split.hpp"

namespace profkg {

inline const std::vector<std::size_t> kDefaultCutoffs{10, 20, 40};

struct RankedList {
  EntityId user{};
  std::vector<EntityId> items;  // best first
};

// Sorts by score descending, ties by ascending item id; masked items are dropped.
// Only the first `limit` positions are materialized.
template <typename T>
RankedList rank_items(EntityId user, const std::vector<EntityId>& candidates, const std::vector<T>& scores,
                      const std::set<EntityId>& masked, std::size_t limit = static_cast<std::size_t>(-1)) {
  std::vector<std::size_t> order;
  order.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (!masked.contains(candidates[i])) order.push_back(i);
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  };
  const std::size_t k = std::min(limit, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  RankedList out{user, {}};
  out.items.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.items.push_back(candidates[order[i]]);
  return out;
}

inline double recall_at_k(const RankedList& ranked, const std::set<EntityId>& relevant, std::size_t k) {
  if (relevant.empty()) throw Error(ErrorCode::empty_relevant_set, "recall needs relevant items");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranked.items.size()); ++i)
    if (relevant.contains(ranked.items[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

inline double ndcg_at_k(const RankedList& ranked, const std::set<EntityId>& relevant, std::size_t k) {
  if (relevant.empty()) throw Error(ErrorCode::empty_relevant_set, "ndcg needs relevant items");
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranked.items.size()); ++i)
    if (relevant.contains(ranked.items[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  for (std::size_t i = 0; i < std::min(k, relevant.size()); ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

struct MetricReport {
  std::vector<std::size_t> cutoffs;
  std::vector<double> recall;  // aligned with cutoffs
  std::vector<double> ndcg;
  std::size_t users = 0;
  std::string config_hash;

  double recall_at(std::size_t k) const { return recall.at(position(k)); }
  double ndcg_at(std::size_t k) const { return ndcg.at(position(k)); }

 private:
  std::size_t position(std::size_t k) const {
    auto it = std::find(cutoffs.begin(), cutoffs.end(), k);
    if (it == cutoffs.end()) throw Error(ErrorCode::usage, "cutoff " + std::to_string(k) + " not evaluated");
    return static_cast<std::size_t>(it - cutoffs.begin());
  }
};

enum class EvalTarget { validation, test };

struct EvalOptions {
  EvalTarget target = EvalTarget::test;
  std::vector<std::size_t> cutoffs = kDefaultCutoffs;
  bool mask_validation = false;  // test target only
};

// Full-candidate ranking of every item for each user with at least one relevant item.
template <typename T>
MetricReport evaluate(const Matrix<T>& z, const KnowledgeGraph& g, const InteractionSplit& split,
                      const EvalOptions& options = {}) {
  const auto& relevant_pairs = options.target == EvalTarget::test ? split.test : split.validation;
  std::map<EntityId, std::set<EntityId>> relevant, masked;
  for (const Interaction& p : relevant_pairs) relevant[p.user].insert(p.item);
  for (const Interaction& p : split.train) masked[p.user].insert(p.item);
  if (options.target == EvalTarget::test && options.mask_validation)
    for (const Interaction& p : split.validation) masked[p.user].insert(p.item);

  const std::vector<EntityId>& items = g.items();
  Matrix<T> item_z(static_cast<Eigen::Index>(items.size()), z.cols());
  for (std::size_t i = 0; i < items.size(); ++i)
    item_z.row(static_cast<Eigen::Index>(i)) = z.row(static_cast<Eigen::Index>(index_of(items[i])));
  const std::size_t max_k = options.cutoffs.empty()
                                ? 0
                                : *std::max_element(options.cutoffs.begin(), options.cutoffs.end());

  MetricReport report;
  report.cutoffs = options.cutoffs;
  report.recall.assign(options.cutoffs.size(), 0.0);
  report.ndcg.assign(options.cutoffs.size(), 0.0);
  static const std::set<EntityId> none;
  std::vector<T> scores(items.size());
  for (const auto& [user, rel] : relevant) {
    const Vector<T> s = item_z * z.row(static_cast<Eigen::Index>(index_of(user))).transpose();
    for (std::size_t i = 0; i < items.size(); ++i) scores[i] = s(static_cast<Eigen::Index>(i));
    auto mit = masked.find(user);
    const RankedList ranked = rank_items(user, items, scores, mit == masked.end() ? none : mit->second, max_k);
    for (std::size_t c = 0; c < options.cutoffs.size(); ++c) {
      report.recall[c] += recall_at_k(ranked, rel, options.cutoffs[c]);
      report.ndcg[c] += ndcg_at_k(ranked, rel, options.cutoffs[c]);
    }
    ++report.users;
  }
  if (report.users > 0)
    for (std::size_t c = 0; c < options.cutoffs.size(); ++c) {
      report.recall[c] /= static_cast<double>(report.users);
      report.ndcg[c] /= static_cast<double>(report.users);
    }
  return report;
}

// Expected Recall@K of a uniformly random ranking over each user's unmasked items.
inline double random_recall_expectation(const KnowledgeGraph& g, const InteractionSplit& split, EvalTarget target,
                                        std::size_t k, bool mask_validation = false) {
  const auto& relevant_pairs = target == EvalTarget::test ? split.test : split.validation;
  std::map<EntityId, std::size_t> masked;
  std::set<EntityId> evaluated;
  for (const Interaction& p : relevant_pairs) evaluated.insert(p.user);
  for (const Interaction& p : split.train) ++masked[p.user];
  if (target == EvalTarget::test && mask_validation)
    for (const Interaction& p : split.validation) ++masked[p.user];
  double total = 0.0;
  for (EntityId u : evaluated) {
    const double candidates = static_cast<double>(g.items().size() - masked[u]);
    total += std::min(1.0, static_cast<double>(k) / candidates);
  }
  return evaluated.empty() ? 0.0 : total / static_cast<double>(evaluated.size());
}

inline std::string format_report(const MetricReport& r) {
  std::ostringstream os;
  char buf[64];
  os << "metric ";
  for (std::size_t k : r.cutoffs) {
    std::snprintf(buf, sizeof buf, "%10s", ("@" + std::to_string(k)).c_str());
    os << buf;
  }
  os << '\n' << "recall ";
  for (double v : r.recall) {
    std::snprintf(buf, sizeof buf, "%10.4f", v);
    os << buf;
  }
  os << '\n' << "ndcg   ";
  for (double v : r.ndcg) {
    std::snprintf(buf, sizeof buf, "%10.4f", v);
    os << buf;
  }
  os << '\n' << "users  " << r.users << '\n';
  return os.str();
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j{{"users", r.users}, {"config_hash", r.config_hash}};
  for (std::size_t c = 0; c < r.cutoffs.size(); ++c) {
    j["recall@" + std::to_string(r.cutoffs[c])] = r.recall[c];
    j["ndcg@" + std::to_string(r.cutoffs[c])] = r.ndcg[c];
  }
  return j;
}

}  // namespace profkg
