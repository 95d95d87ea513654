#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "profkg/error.hpp"
#include "profkg/random.hpp"
#include "profkg/tensor.hpp"

namespace profkg {

// log(1 + e^x) without overflow.
template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Mean of -log sigmoid(pos - neg), as softplus(neg - pos).
template <typename T>
T bpr_loss(std::span<const T> positive, std::span<const T> negative) {
  if (positive.size() != negative.size()) throw Error(ErrorCode::shape_mismatch, "bpr score lists differ in length");
  if (positive.empty()) return T(0);
  T sum = 0;
  for (std::size_t i = 0; i < positive.size(); ++i) sum += softplus(negative[i] - positive[i]);
  return sum / static_cast<T>(positive.size());
}

template <typename T>
T bpr_loss(const std::vector<T>& positive, const std::vector<T>& negative) {
  return bpr_loss(std::span<const T>(positive), std::span<const T>(negative));
}

// K = ceil(N q), clamped to [1, N].
inline std::size_t matching_sample_size(std::size_t n, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw Error(ErrorCode::spec_invalid, "sampling ratio q must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * q - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

using SampledRounds = std::vector<std::vector<std::size_t>>;

// R rounds, each K distinct row indices.
inline SampledRounds sample_matching_rounds(std::size_t n, double q, std::size_t rounds, Rng& rng) {
  if (rounds < 1) throw Error(ErrorCode::spec_invalid, "rounds must be >= 1");
  const std::size_t k = matching_sample_size(n, q);
  SampledRounds out;
  out.reserve(rounds);
  for (std::size_t r = 0; r < rounds; ++r) out.push_back(sample_without_replacement(rng, n, k));
  return out;
}

template <typename T>
struct MatchingLoss {
  T value = 0;
  Matrix<T> grad_graph;    // dL/dZ_kg (unnormalized input), zero where unsampled
  Matrix<T> grad_profile;  // dL/dZ_text
};

// Sum over rounds of ||A_S A_S^T - B_S B_S^T||_F^2 / (R K^2) on row-normalized copies.
template <typename T>
MatchingLoss<T> pairwise_matching_loss(const Matrix<T>& graph, const Matrix<T>& profile, const SampledRounds& rounds,
                                       bool with_gradients = true) {
  if (graph.rows() != profile.rows()) throw Error(ErrorCode::shape_mismatch, "matching views differ in row count");
  if (rounds.empty()) throw Error(ErrorCode::spec_invalid, "no sampled rounds");
  MatchingLoss<T> out;
  if (with_gradients) {
    out.grad_graph = Matrix<T>::Zero(graph.rows(), graph.cols());
    out.grad_profile = Matrix<T>::Zero(profile.rows(), profile.cols());
  }
  const std::size_t k = rounds.front().size();
  const T scale = T(1) / (static_cast<T>(rounds.size()) * static_cast<T>(k) * static_cast<T>(k));

  auto gather = [](const Matrix<T>& src, const std::vector<std::size_t>& idx, Vector<T>& norms) {
    Matrix<T> m(static_cast<Eigen::Index>(idx.size()), src.cols());
    norms.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto row = src.row(static_cast<Eigen::Index>(idx[i]));
      const T nrm = row.norm();
      if (!(nrm > T(0))) throw Error(ErrorCode::degenerate_row, "row " + std::to_string(idx[i]) + " has zero norm");
      norms(static_cast<Eigen::Index>(i)) = nrm;
      m.row(static_cast<Eigen::Index>(i)) = row / nrm;
    }
    return m;
  };
  // Gradient through y = x / |x|: dx = (dy - y (y . dy)) / |x|.
  auto scatter = [](const Matrix<T>& normalized, const Vector<T>& norms, const Matrix<T>& grad_normalized,
                    const std::vector<std::size_t>& idx, Matrix<T>& dst) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto y = normalized.row(ii);
      const auto dy = grad_normalized.row(ii);
      dst.row(static_cast<Eigen::Index>(idx[i])) += (dy - y * y.dot(dy)) / norms(ii);
    }
  };

  for (const auto& idx : rounds) {
    if (idx.size() != k) throw Error(ErrorCode::spec_invalid, "rounds must share one sample size");
    Vector<T> na, nb;
    const Matrix<T> a = gather(graph, idx, na);
    const Matrix<T> b = gather(profile, idx, nb);
    const Matrix<T> diff = a * a.transpose() - b * b.transpose();
    out.value += diff.squaredNorm() * scale;
    if (!with_gradients) continue;
    const Matrix<T> ga = (T(4) * scale) * (diff * a);
    const Matrix<T> gb = (T(-4) * scale) * (diff * b);
    scatter(a, na, ga, idx, out.grad_graph);
    scatter(b, nb, gb, idx, out.grad_profile);
  }
  return out;
}

template <typename T>
T pairwise_matching_loss(const Matrix<T>& graph, const Matrix<T>& profile, double q, std::size_t rounds,
                         std::uint64_t seed) {
  Rng rng = make_rng(seed, "matching");
  return pairwise_matching_loss(graph, profile, sample_matching_rounds(graph.rows(), q, rounds, rng), false).value;
}

}  // namespace profkg
