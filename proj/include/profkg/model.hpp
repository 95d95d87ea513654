#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "profkg/error.hpp"
#include "profkg/graph.hpp"
#include "profkg/random.hpp"
#include "profkg/tensor.hpp"

namespace profkg {

enum class FusionMode {
  add_with_inverse,
  add_without_inverse,
  mul_with_inverse,
  mul_without_inverse,
  concatenate,
  attention_fusion,
};

inline constexpr std::array<FusionMode, 6> kAllFusionModes{
    FusionMode::add_with_inverse, FusionMode::add_without_inverse, FusionMode::mul_with_inverse,
    FusionMode::mul_without_inverse, FusionMode::concatenate, FusionMode::attention_fusion};

inline const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::add_with_inverse: return "add-with-inverse";
    case FusionMode::add_without_inverse: return "add-without-inverse";
    case FusionMode::mul_with_inverse: return "mul-with-inverse";
    case FusionMode::mul_without_inverse: return "mul-without-inverse";
    case FusionMode::concatenate: return "concatenate";
    case FusionMode::attention_fusion: return "attention-fusion";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(std::string_view s) {
  for (FusionMode m : kAllFusionModes)
    if (s == to_string(m)) return m;
  throw Error(ErrorCode::usage, "unknown fusion mode '" + std::string(s) + "'");
}

inline bool is_additive(FusionMode m) {
  return m == FusionMode::add_with_inverse || m == FusionMode::add_without_inverse;
}
inline bool is_multiplicative(FusionMode m) {
  return m == FusionMode::mul_with_inverse || m == FusionMode::mul_without_inverse;
}

struct ModelConfig {
  std::size_t dim = 64;           // d
  std::size_t profile_dim = 1024;  // d_s
  std::size_t hidden = 0;         // projection width; 0 means ceil((d_s + d) / 2)
  std::size_t layers = 2;         // L
  double lambda_p = 0.25;
  FusionMode fusion = FusionMode::add_with_inverse;
  bool frozen_attention = false;  // compute attention once from the injected layer-0 state
  bool inject_relations = false;  // also inject projected relation profiles
  double leaky_slope = 0.01;
  double divisor_epsilon = 1e-8;

  std::size_t hidden_width() const { return hidden ? hidden : (profile_dim + dim + 1) / 2; }
};

// All trainable tensors. Biases are 1 x n rows so every tensor is a Matrix.
template <typename T>
struct ModelParams {
  Matrix<T> entity;    // N x d
  Matrix<T> relation;  // |R| x d
  Matrix<T> att_w1;    // d x d
  Matrix<T> att_w2;    // d x d
  Matrix<T> proj_w1;   // d_s x h
  Matrix<T> proj_b1;   // 1 x h
  Matrix<T> proj_w2;   // h x d
  Matrix<T> proj_b2;   // 1 x d
  Matrix<T> fusion_w;  // 2d x d, concatenate mode only (else empty)
  Matrix<T> fusion_q;  // 1 x d, attention-fusion mode only (else empty)

  static constexpr std::array<const char*, 10> names{
      "entity", "relation", "att_w1", "att_w2", "proj_w1",
      "proj_b1", "proj_w2", "proj_b2", "fusion_w", "fusion_q"};

  std::array<Matrix<T>*, 10> tensors() {
    return {&entity, &relation, &att_w1, &att_w2, &proj_w1, &proj_b1, &proj_w2, &proj_b2, &fusion_w, &fusion_q};
  }
  std::array<const Matrix<T>*, 10> tensors() const {
    return {&entity, &relation, &att_w1, &att_w2, &proj_w1, &proj_b1, &proj_w2, &proj_b2, &fusion_w, &fusion_q};
  }

  ModelParams zeros_like() const {
    ModelParams z;
    auto dst = z.tensors();
    auto src = tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = Matrix<T>::Zero(src[i]->rows(), src[i]->cols());
    return z;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    auto dst = out.tensors();
    auto src = tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    return out;
  }

  bool all_finite() const {
    for (const Matrix<T>* t : tensors())
      if (!t->allFinite()) return false;
    return true;
  }
};

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::size_t entities, std::size_t relations,
                           std::uint64_t seed) {
  Rng rng = make_rng(seed, "init");
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const auto ds = static_cast<Eigen::Index>(cfg.profile_dim);
  const auto h = static_cast<Eigen::Index>(cfg.hidden_width());
  auto uniform = [&](Eigen::Index r, Eigen::Index c, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix<T> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
    return m;
  };
  const double emb = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  ModelParams<T> p;
  p.entity = uniform(static_cast<Eigen::Index>(entities), d, emb);
  p.relation = uniform(static_cast<Eigen::Index>(relations), d, emb);
  p.att_w1 = uniform(d, d, 1.0 / std::sqrt(static_cast<double>(d)));
  p.att_w2 = uniform(d, d, 1.0 / std::sqrt(static_cast<double>(d)));
  p.proj_w1 = uniform(ds, h, 1.0 / std::sqrt(static_cast<double>(ds)));
  p.proj_b1 = Matrix<T>::Zero(1, h);
  p.proj_w2 = uniform(h, d, 1.0 / std::sqrt(static_cast<double>(h)));
  p.proj_b2 = Matrix<T>::Zero(1, d);
  p.fusion_w = Matrix<T>::Zero(cfg.fusion == FusionMode::concatenate ? 2 * d : 0,
                               cfg.fusion == FusionMode::concatenate ? d : 0);
  if (cfg.fusion == FusionMode::concatenate) {
    p.fusion_w.topRows(d).setIdentity();
    p.fusion_w.bottomRows(d).setIdentity();
  }
  p.fusion_q = Matrix<T>::Zero(cfg.fusion == FusionMode::attention_fusion ? 1 : 0,
                               cfg.fusion == FusionMode::attention_fusion ? d : 0);
  return p;
}

// Profile vectors fed into the model.
template <typename T>
struct ProfileInputs {
  Matrix<T> entity_profiles;    // N x d_s
  Matrix<T> relation_profiles;  // |R| x d_s; needed only with inject_relations
  Vector<T> scale;              // per-entity injection multiplier in {0,1}; empty means all ones
};

template <typename T>
struct ProjectionCache {
  Matrix<T> pre;  // first affine
  Matrix<T> act;  // after leaky rectifier
  Matrix<T> out;  // second affine
};

template <typename T>
ProjectionCache<T> project_rows(const ModelParams<T>& p, const ModelConfig& cfg, const Matrix<T>& input) {
  if (input.cols() != p.proj_w1.rows() || p.proj_w1.cols() != p.proj_w2.rows())
    throw Error(ErrorCode::shape_mismatch, "profile width " + std::to_string(input.cols()) +
                                               " vs projection input " + std::to_string(p.proj_w1.rows()));
  const T slope = static_cast<T>(cfg.leaky_slope);
  ProjectionCache<T> c;
  c.pre = input * p.proj_w1;
  c.pre.rowwise() += p.proj_b1.row(0);
  c.act = c.pre.unaryExpr([slope](T v) { return v > T(0) ? v : slope * v; });
  c.out = c.act * p.proj_w2;
  c.out.rowwise() += p.proj_b2.row(0);
  return c;
}

// Two-layer perceptron from profile space (d_s) to embedding space (d).
template <typename T>
Vector<T> project_profile(const ModelParams<T>& p, const ModelConfig& cfg, const Vector<T>& profile) {
  Matrix<T> row = profile.transpose();
  return project_rows(p, cfg, row).out.row(0).transpose();
}

template <typename T>
struct InjectResult {
  Matrix<T> injected;        // layer-0 state
  bool near_zero_divisor = false;
  Matrix<T> fusion_input;    // concatenate: [x | m]
  Matrix<T> fusion_weights;  // attention-fusion: N x 2 softmax weights
};

// Combines embeddings with m = lambda_p * scale_e * M(p_e) according to the fusion mode.
template <typename T>
InjectResult<T> inject(const ModelParams<T>& p, const ModelConfig& cfg, const Matrix<T>& embeddings,
                       const Matrix<T>& scaled_profiles) {
  if (embeddings.rows() != scaled_profiles.rows() || embeddings.cols() != scaled_profiles.cols())
    throw Error(ErrorCode::shape_mismatch, "embedding and projected profile shapes differ");
  InjectResult<T> r;
  const Matrix<T>& x = embeddings;
  const Matrix<T>& m = scaled_profiles;
  switch (cfg.fusion) {
    case FusionMode::add_with_inverse:
    case FusionMode::add_without_inverse:
      r.injected = x + m;
      break;
    case FusionMode::mul_with_inverse:
    case FusionMode::mul_without_inverse: {
      Matrix<T> divisor = m.array() + T(1);
      r.injected = x.cwiseProduct(divisor);
      if (cfg.fusion == FusionMode::mul_with_inverse)
        r.near_zero_divisor = (divisor.array().abs() < static_cast<T>(cfg.divisor_epsilon)).any();
      break;
    }
    case FusionMode::concatenate:
      r.fusion_input.resize(x.rows(), 2 * x.cols());
      r.fusion_input << x, m;
      r.injected = r.fusion_input * p.fusion_w;
      break;
    case FusionMode::attention_fusion: {
      const Vector<T> q = p.fusion_q.row(0).transpose();
      r.fusion_weights.resize(x.rows(), 2);
      r.injected.resize(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const T s1 = x.row(i).dot(q.transpose());
        const T s2 = m.row(i).dot(q.transpose());
        const T mx = std::max(s1, s2);
        const T e1 = std::exp(s1 - mx), e2 = std::exp(s2 - mx);
        const T b1 = e1 / (e1 + e2), b2 = e2 / (e1 + e2);
        r.fusion_weights(i, 0) = b1;
        r.fusion_weights(i, 1) = b2;
        r.injected.row(i) = b1 * x.row(i) + b2 * m.row(i);
      }
      break;
    }
  }
  return r;
}

template <typename T>
struct AttentionState {
  Matrix<T> keys;     // X W1 (head side)
  Matrix<T> values;   // X W2 (tail side)
  std::vector<T> weights;  // per triple, softmax over each head's neighborhood
};

// Relation-aware attention: logit(h,r,t) = (x_h W1) . (x_t W2 * x_r) / sqrt(d),
// normalized with a max-shifted softmax over all outgoing triples of h.
template <typename T>
AttentionState<T> attention_scores(const ModelParams<T>& p, const Matrix<T>& state, const Matrix<T>& relations,
                                   const KnowledgeGraph& g) {
  AttentionState<T> a;
  a.keys = state * p.att_w1;
  a.values = state * p.att_w2;
  a.weights.assign(g.triples().size(), T(0));
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(state.cols()));
  std::vector<T> logits;
  for (std::size_t h = 0; h < g.entity_count(); ++h) {
    auto edges = g.neighbors(entity_at(h));
    if (edges.empty()) continue;
    logits.resize(edges.size());
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto t = static_cast<Eigen::Index>(index_of(edges[k].tail));
      const auto r = static_cast<Eigen::Index>(index_of(edges[k].relation));
      logits[k] = a.keys.row(static_cast<Eigen::Index>(h))
                      .dot(a.values.row(t).cwiseProduct(relations.row(r))) * inv_sqrt_d;
      mx = std::max(mx, logits[k]);
    }
    T sum = 0;
    for (T& l : logits) sum += (l = std::exp(l - mx));
    for (std::size_t k = 0; k < edges.size(); ++k) a.weights[edges[k].triple] = logits[k] / sum;
  }
  return a;
}

// Mean aggregation: users average neighbor states; other heads average
// attention-weighted relation-modulated neighbor states. Empty neighborhoods give zero.
template <typename T>
Matrix<T> aggregate_layer(const Matrix<T>& state, const std::vector<T>& weights, const Matrix<T>& relations,
                          const KnowledgeGraph& g) {
  Matrix<T> next = Matrix<T>::Zero(state.rows(), state.cols());
  for (std::size_t h = 0; h < g.entity_count(); ++h) {
    const EntityId head = entity_at(h);
    auto edges = g.neighbors(head);
    if (edges.empty()) continue;
    auto row = next.row(static_cast<Eigen::Index>(h));
    const bool user = g.is_user(head);
    for (const Neighbor& e : edges) {
      const auto t = static_cast<Eigen::Index>(index_of(e.tail));
      if (user)
        row += state.row(t);
      else
        row += weights[e.triple] * relations.row(static_cast<Eigen::Index>(index_of(e.relation)))
                                       .cwiseProduct(state.row(t));
    }
    row /= static_cast<T>(edges.size());
  }
  return next;
}

// Forward result plus everything backward() needs.
template <typename T>
struct PropagationOutput {
  Matrix<T> z;                         // N x d final representations
  std::vector<Matrix<T>> layers;       // injected layer states 0..L
  std::vector<AttentionState<T>> attention;  // per layer (one entry when frozen)
  ProjectionCache<T> entity_projection;     // M(p_e)
  ProjectionCache<T> relation_projection;   // M(p_r), inject_relations only
  Matrix<T> scaled;                    // m = lambda_p * scale * M(p)
  Matrix<T> relations;                 // relation embeddings used for propagation
  Matrix<T> layer_sum;                 // sum of layer states
  InjectResult<T> injection;

  const Matrix<T>& projected() const { return entity_projection.out; }
  // Attention weights from the last layer's computation.
  const std::vector<T>& last_attention() const { return attention.back().weights; }
};

namespace detail {

template <typename T>
Matrix<T> scale_rows(const Matrix<T>& m, T lambda, const Vector<T>& scale) {
  Matrix<T> out = m * lambda;
  if (scale.size() > 0) {
    if (scale.size() != m.rows()) throw Error(ErrorCode::shape_mismatch, "profile scale length");
    out.array().colwise() *= scale.array();
  }
  return out;
}

}  // namespace detail

template <typename T>
PropagationOutput<T> propagate(const ModelParams<T>& p, const ModelConfig& cfg, const ProfileInputs<T>& inputs,
                               const KnowledgeGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.entity_count());
  if (p.entity.rows() != n || inputs.entity_profiles.rows() != n)
    throw Error(ErrorCode::shape_mismatch, "entity count differs between graph, params and profiles");
  if (p.relation.rows() != static_cast<Eigen::Index>(g.relation_count()))
    throw Error(ErrorCode::shape_mismatch, "relation count differs between graph and params");

  const T lambda = static_cast<T>(cfg.lambda_p);
  PropagationOutput<T> out;
  out.entity_projection = project_rows(p, cfg, inputs.entity_profiles);
  out.scaled = detail::scale_rows(out.entity_projection.out, lambda, inputs.scale);
  out.relations = p.relation;
  if (cfg.inject_relations) {
    if (inputs.relation_profiles.rows() != p.relation.rows())
      throw Error(ErrorCode::shape_mismatch, "inject_relations needs one profile row per relation");
    out.relation_projection = project_rows(p, cfg, inputs.relation_profiles);
    out.relations += lambda * out.relation_projection.out;
  }

  out.injection = inject(p, cfg, p.entity, out.scaled);
  if (out.injection.near_zero_divisor)
    throw Error(ErrorCode::near_zero_divisor, "1 + lambda_p * M(p) is within epsilon of zero");
  out.layers.push_back(out.injection.injected);
  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    if (!cfg.frozen_attention || out.attention.empty())
      out.attention.push_back(attention_scores(p, out.layers.back(), out.relations, g));
    out.layers.push_back(aggregate_layer(out.layers.back(), out.attention.back().weights, out.relations, g));
  }
  if (out.attention.empty()) out.attention.push_back(attention_scores(p, out.layers.front(), out.relations, g));

  out.layer_sum = out.layers.front();
  for (std::size_t l = 1; l < out.layers.size(); ++l) out.layer_sum += out.layers[l];
  switch (cfg.fusion) {
    case FusionMode::add_with_inverse:
      out.z = out.layer_sum - out.scaled;
      break;
    case FusionMode::mul_with_inverse:
      out.z = out.layer_sum.array() / (out.scaled.array() + T(1));
      break;
    default:
      out.z = out.layer_sum;
  }
  return out;
}

// Unnormalized dot product of user and item representations.
template <typename T>
T score(const PropagationOutput<T>& out, const KnowledgeGraph& g, EntityId u, EntityId v) {
  if (!g.is_user(u)) throw Error(ErrorCode::role_mismatch, "'" + g.entity_label(u) + "' is not a user");
  if (!g.is_item(v)) throw Error(ErrorCode::role_mismatch, "'" + g.entity_label(v) + "' is not an item");
  return out.z.row(static_cast<Eigen::Index>(index_of(u))).dot(out.z.row(static_cast<Eigen::Index>(index_of(v))));
}

namespace detail {

template <typename T>
void projection_backward(const ModelParams<T>& p, const ModelConfig& cfg, const Matrix<T>& input,
                         const ProjectionCache<T>& cache, const Matrix<T>& grad_out, ModelParams<T>& grads) {
  const T slope = static_cast<T>(cfg.leaky_slope);
  grads.proj_w2.noalias() += cache.act.transpose() * grad_out;
  grads.proj_b2 += grad_out.colwise().sum();
  Matrix<T> grad_pre = grad_out * p.proj_w2.transpose();
  grad_pre.array() *= cache.pre.unaryExpr([slope](T v) { return v > T(0) ? T(1) : slope; }).array();
  grads.proj_w1.noalias() += input.transpose() * grad_pre;
  grads.proj_b1 += grad_pre.colwise().sum();
}

// Backward of one aggregation layer; adds into grad_prev and the attention key/value grads.
template <typename T>
void layer_backward(const Matrix<T>& prev, const AttentionState<T>& att, const Matrix<T>& relations,
                    const KnowledgeGraph& g, const Matrix<T>& grad, Matrix<T>& grad_prev, Matrix<T>& grad_rel,
                    Matrix<T>& grad_keys, Matrix<T>& grad_values) {
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(prev.cols()));
  std::vector<T> dphi;
  for (std::size_t h = 0; h < g.entity_count(); ++h) {
    const EntityId head = entity_at(h);
    auto edges = g.neighbors(head);
    if (edges.empty()) continue;
    const auto hi = static_cast<Eigen::Index>(h);
    const T inv_n = T(1) / static_cast<T>(edges.size());
    const auto g_h = grad.row(hi);
    if (g.is_user(head)) {
      for (const Neighbor& e : edges) grad_prev.row(static_cast<Eigen::Index>(index_of(e.tail))) += inv_n * g_h;
      continue;
    }
    dphi.resize(edges.size());
    T weighted = 0;
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto t = static_cast<Eigen::Index>(index_of(edges[k].tail));
      const auto r = static_cast<Eigen::Index>(index_of(edges[k].relation));
      dphi[k] = inv_n * g_h.dot(relations.row(r).cwiseProduct(prev.row(t)));
      weighted += att.weights[edges[k].triple] * dphi[k];
    }
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto t = static_cast<Eigen::Index>(index_of(edges[k].tail));
      const auto r = static_cast<Eigen::Index>(index_of(edges[k].relation));
      const T phi = att.weights[edges[k].triple];
      grad_prev.row(t) += (inv_n * phi) * g_h.cwiseProduct(relations.row(r));
      grad_rel.row(r) += (inv_n * phi) * g_h.cwiseProduct(prev.row(t));
      const T dlogit = phi * (dphi[k] - weighted) * inv_sqrt_d;
      if (dlogit == T(0)) continue;
      grad_keys.row(hi) += dlogit * att.values.row(t).cwiseProduct(relations.row(r));
      grad_values.row(t) += dlogit * att.keys.row(hi).cwiseProduct(relations.row(r));
      grad_rel.row(r) += dlogit * att.keys.row(hi).cwiseProduct(att.values.row(t));
    }
  }
}

}  // namespace detail

// Gradients of a scalar loss given dL/dz and dL/dM(p_e) (the latter from losses that
// read the projected profiles directly). Shapes mirror the parameters.
template <typename T>
ModelParams<T> backward(const ModelParams<T>& p, const ModelConfig& cfg, const ProfileInputs<T>& inputs,
                        const KnowledgeGraph& g, const PropagationOutput<T>& out, const Matrix<T>& grad_z,
                        const Matrix<T>* grad_projected = nullptr) {
  ModelParams<T> grads = p.zeros_like();
  const T lambda = static_cast<T>(cfg.lambda_p);
  const Eigen::Index n = out.z.rows(), d = out.z.cols();

  Matrix<T> grad_sum = grad_z;
  Matrix<T> grad_scaled = Matrix<T>::Zero(n, d);
  if (cfg.fusion == FusionMode::add_with_inverse) {
    grad_scaled -= grad_z;
  } else if (cfg.fusion == FusionMode::mul_with_inverse) {
    const Matrix<T> divisor = out.scaled.array() + T(1);
    grad_sum = grad_z.array() / divisor.array();
    grad_scaled -= grad_sum.cwiseProduct(out.z);
  }

  const std::size_t layers = out.layers.size() - 1;
  std::vector<Matrix<T>> grad_layer(layers + 1, grad_sum);
  Matrix<T> grad_rel_bar = Matrix<T>::Zero(out.relations.rows(), d);
  Matrix<T> frozen_keys, frozen_values;
  if (cfg.frozen_attention) {
    frozen_keys = Matrix<T>::Zero(n, d);
    frozen_values = Matrix<T>::Zero(n, d);
  }
  for (std::size_t l = layers; l >= 1; --l) {
    const AttentionState<T>& att = cfg.frozen_attention ? out.attention.front() : out.attention[l - 1];
    Matrix<T> gk, gv;
    if (!cfg.frozen_attention) {
      gk = Matrix<T>::Zero(n, d);
      gv = Matrix<T>::Zero(n, d);
    }
    detail::layer_backward(out.layers[l - 1], att, out.relations, g, grad_layer[l], grad_layer[l - 1], grad_rel_bar,
                           cfg.frozen_attention ? frozen_keys : gk, cfg.frozen_attention ? frozen_values : gv);
    if (!cfg.frozen_attention) {
      grad_layer[l - 1].noalias() += gk * p.att_w1.transpose() + gv * p.att_w2.transpose();
      grads.att_w1.noalias() += out.layers[l - 1].transpose() * gk;
      grads.att_w2.noalias() += out.layers[l - 1].transpose() * gv;
    }
  }
  if (cfg.frozen_attention && layers > 0) {
    grad_layer[0].noalias() += frozen_keys * p.att_w1.transpose() + frozen_values * p.att_w2.transpose();
    grads.att_w1.noalias() += out.layers[0].transpose() * frozen_keys;
    grads.att_w2.noalias() += out.layers[0].transpose() * frozen_values;
  }

  const Matrix<T>& g0 = grad_layer[0];
  const Matrix<T>& x = p.entity;
  const Matrix<T>& m = out.scaled;
  switch (cfg.fusion) {
    case FusionMode::add_with_inverse:
    case FusionMode::add_without_inverse:
      grads.entity += g0;
      grad_scaled += g0;
      break;
    case FusionMode::mul_with_inverse:
    case FusionMode::mul_without_inverse:
      grads.entity += g0.cwiseProduct((m.array() + T(1)).matrix());
      grad_scaled += g0.cwiseProduct(x);
      break;
    case FusionMode::concatenate: {
      grads.fusion_w.noalias() += out.injection.fusion_input.transpose() * g0;
      const Matrix<T> grad_in = g0 * p.fusion_w.transpose();
      grads.entity += grad_in.leftCols(d);
      grad_scaled += grad_in.rightCols(d);
      break;
    }
    case FusionMode::attention_fusion: {
      const auto q = p.fusion_q.row(0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const T b1 = out.injection.fusion_weights(i, 0), b2 = out.injection.fusion_weights(i, 1);
        const T db1 = g0.row(i).dot(x.row(i)), db2 = g0.row(i).dot(m.row(i));
        const T mean = b1 * db1 + b2 * db2;
        const T ds1 = b1 * (db1 - mean), ds2 = b2 * (db2 - mean);
        grads.entity.row(i) += b1 * g0.row(i) + ds1 * q;
        grad_scaled.row(i) += b2 * g0.row(i) + ds2 * q;
        grads.fusion_q.row(0) += ds1 * x.row(i) + ds2 * m.row(i);
      }
      break;
    }
  }

  Matrix<T> grad_proj = detail::scale_rows(grad_scaled, lambda, inputs.scale);
  if (grad_projected) grad_proj += *grad_projected;
  detail::projection_backward(p, cfg, inputs.entity_profiles, out.entity_projection, grad_proj, grads);

  grads.relation += grad_rel_bar;
  if (cfg.inject_relations)
    detail::projection_backward(p, cfg, inputs.relation_profiles, out.relation_projection,
                                Matrix<T>(lambda * grad_rel_bar), grads);
  return grads;
}

}  // namespace profkg
