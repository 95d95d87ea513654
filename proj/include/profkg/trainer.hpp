#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "profkg/adam.hpp"
#include "profkg/error.hpp"
#include "profkg/evaluator.hpp"
#include "profkg/losses.hpp"
#include "profkg/model.hpp"
#include "profkg/sampler.hpp"
#include "profkg/split.hpp"

namespace profkg {

struct TrainConfig {
  ModelConfig model;
  double lambda_pair = 0.01;
  double sample_ratio = 0.1;  // q
  std::size_t rounds = 3;     // R
  double learning_rate = 1e-3;
  std::size_t batch_size = 1024;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  std::size_t early_stopping_k = 20;
  bool record_wall_time = false;  // wall-clock seconds make logs non-reproducible

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::spec_invalid, what); };
    if (!(sample_ratio > 0.0 && sample_ratio <= 1.0)) fail("q must lie in (0, 1]");
    if (rounds < 1) fail("rounds must be >= 1");
    if (!(learning_rate > 0.0)) fail("learning rate must be > 0");
    if (batch_size < 1) fail("batch size must be >= 1");
    if (max_epochs < 1) fail("max epochs must be >= 1");
    if (model.dim < 1 || model.profile_dim < 1) fail("dimensions must be >= 1");
    if (model.lambda_p < 0.0) fail("lambda_p must be >= 0");
    if (lambda_pair < 0.0 || weight_decay < 0.0) fail("lambda_pair and weight decay must be >= 0");
  }

  AdamConfig adam() const {
    AdamConfig a;
    a.learning_rate = learning_rate;
    a.weight_decay = weight_decay;
    return a;
  }
};

struct LossBreakdown {
  double rec = 0.0;
  double pair = 0.0;
  double total = 0.0;
};

template <typename T>
struct LossAndGradients {
  LossBreakdown loss;
  ModelParams<T> grads;
};

namespace detail {

template <typename T>
void check_finite(const ModelParams<T>& grads, const LossBreakdown& loss) {
  if (!std::isfinite(loss.total))
    throw Error(ErrorCode::non_finite_loss, "loss is not finite (rec=" + std::to_string(loss.rec) +
                                                ", pair=" + std::to_string(loss.pair) + ")");
  auto tensors = grads.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i)
    if (!tensors[i]->allFinite())
      throw Error(ErrorCode::non_finite_loss, std::string("gradient of ") + ModelParams<T>::names[i] + " is not finite");
}

}  // namespace detail

// L = mean BPR over the batch + lambda_pair * matching loss over the given rounds.
template <typename T>
LossAndGradients<T> loss_and_gradients(const ModelParams<T>& params, const TrainConfig& cfg,
                                       const ProfileInputs<T>& inputs, const KnowledgeGraph& g, const Batch& batch,
                                       const SampledRounds& rounds, bool with_gradients = true) {
  const PropagationOutput<T> out = propagate(params, cfg.model, inputs, g);
  const Matrix<T>& z = out.z;
  Matrix<T> grad_z = Matrix<T>::Zero(z.rows(), z.cols());
  LossAndGradients<T> result;

  const T inv_b = batch.triplets.empty() ? T(0) : T(1) / static_cast<T>(batch.triplets.size());
  double rec = 0.0;
  for (const BprTriplet& t : batch.triplets) {
    const auto u = static_cast<Eigen::Index>(index_of(t.user));
    const auto vp = static_cast<Eigen::Index>(index_of(t.positive));
    const auto vn = static_cast<Eigen::Index>(index_of(t.negative));
    const T diff = z.row(u).dot(z.row(vp)) - z.row(u).dot(z.row(vn));
    rec += static_cast<double>(softplus(-diff));
    const T coef = -sigmoid(-diff) * inv_b;
    grad_z.row(u) += coef * (z.row(vp) - z.row(vn));
    grad_z.row(vp) += coef * z.row(u);
    grad_z.row(vn) -= coef * z.row(u);
  }
  result.loss.rec = rec * static_cast<double>(inv_b);
  result.loss.total = result.loss.rec;

  Matrix<T> grad_projected;
  const bool use_pair = cfg.lambda_pair > 0.0 && !rounds.empty();
  if (use_pair) {
    const T lp = static_cast<T>(cfg.lambda_pair);
    MatchingLoss<T> m = pairwise_matching_loss(z, out.projected(), rounds, with_gradients);
    result.loss.pair = static_cast<double>(m.value);
    result.loss.total += cfg.lambda_pair * result.loss.pair;
    if (with_gradients) {
      grad_z += lp * m.grad_graph;
      grad_projected = lp * m.grad_profile;
    }
  }
  if (with_gradients) {
    result.grads = backward(params, cfg.model, inputs, g, out, grad_z, use_pair ? &grad_projected : nullptr);
    detail::check_finite(result.grads, result.loss);
  } else if (!std::isfinite(result.loss.total)) {
    throw Error(ErrorCode::non_finite_loss, "loss is not finite");
  }
  return result;
}

// One Adam update on a batch; the matching-loss subsets are resampled from `rng`.
template <typename T>
LossBreakdown train_step(ModelParams<T>& params, OptimizerState<T>& opt, const Batch& batch,
                         const ProfileInputs<T>& inputs, const KnowledgeGraph& g, const TrainConfig& cfg, Rng& rng) {
  SampledRounds rounds;
  if (cfg.lambda_pair > 0.0) rounds = sample_matching_rounds(g.entity_count(), cfg.sample_ratio, cfg.rounds, rng);
  LossAndGradients<T> lg = loss_and_gradients(params, cfg, inputs, g, batch, rounds);
  adam_step(params, opt, lg.grads, cfg.adam());
  return lg.loss;
}

// Tracks the best validation metric; stops after `patience` epochs without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when this epoch is the new best.
  bool observe(std::size_t epoch, double metric) {
    if (!best_epoch_ || metric > best_) {
      best_ = metric;
      best_epoch_ = epoch;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }
  bool should_stop() const { return best_epoch_ && stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_.value_or(0); }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  double best_ = 0.0;
  std::optional<std::size_t> best_epoch_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double rec = 0.0;
  double pair = 0.0;
  double val_recall = 0.0;  // at early_stopping_k
  double val_ndcg = 0.0;
  std::optional<double> seconds;
};

inline nlohmann::json to_json(const EpochRecord& r, std::size_t k = 20) {
  const std::string suffix = "@" + std::to_string(k);
  nlohmann::json j{{"epoch", r.epoch}, {"L_rec", r.rec}, {"L_pair", r.pair},
                   {"val_recall" + suffix, r.val_recall}, {"val_ndcg" + suffix, r.val_ndcg}};
  if (r.seconds) j["wall_seconds"] = *r.seconds;
  return j;
}

template <typename T>
struct FitResult {
  ModelParams<T> best_params;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
};

// Epoch loop over shuffled training pairs with per-epoch validation and early stopping.
// `g` is the full graph; propagation runs on its training-interaction subgraph.
template <typename T>
FitResult<T> fit(const KnowledgeGraph& g, const InteractionSplit& split, const ProfileInputs<T>& inputs,
                 const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (split.train.empty() || split.validation.empty())
    throw Error(ErrorCode::spec_invalid, "fit needs non-empty train and validation splits");
  const KnowledgeGraph train_graph = g.with_interactions(split.train);
  const InteractionIndex index(g, g.interactions());

  ModelParams<T> params = init_params<T>(cfg.model, g.entity_count(), train_graph.relation_count(), cfg.seed);
  OptimizerState<T> opt = OptimizerState<T>::for_params(params);
  Rng shuffle_rng = make_rng(cfg.seed, "epochs");
  Rng negative_rng = make_rng(cfg.seed, "negatives");
  Rng matching_rng = make_rng(cfg.seed, "matching");

  EvalOptions eval;
  eval.target = EvalTarget::validation;
  eval.cutoffs = {cfg.early_stopping_k};

  FitResult<T> result;
  result.best_params = params;
  EarlyStopping stopper(cfg.patience);
  std::vector<Interaction> order = split.train;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    shuffle_in_place(shuffle_rng, order);
    double rec = 0.0, pair = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const Batch batch =
          sample_negatives(std::span<const Interaction>(order).subspan(begin, end - begin), index, negative_rng);
      const LossBreakdown loss = train_step(params, opt, batch, inputs, train_graph, cfg, matching_rng);
      rec += loss.rec;
      pair += loss.pair;
      ++batches;
    }

    const PropagationOutput<T> out = propagate(params, cfg.model, inputs, train_graph);
    const MetricReport report = evaluate(out.z, train_graph, split, eval);
    EpochRecord record;
    record.epoch = epoch;
    record.rec = rec / static_cast<double>(batches);
    record.pair = pair / static_cast<double>(batches);
    record.val_recall = report.recall.front();
    record.val_ndcg = report.ndcg.front();
    if (cfg.record_wall_time)
      record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);

    if (stopper.observe(epoch, record.val_recall)) result.best_params = params;
    if (stopper.should_stop()) break;
  }
  result.best_epoch = stopper.best_epoch();
  result.best_metric = stopper.best();
  return result;
}

}  // namespace profkg
