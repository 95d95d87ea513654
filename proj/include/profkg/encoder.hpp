#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "profkg/error.hpp"
#include "profkg/hash.hpp"
#include "profkg/matrix_io.hpp"
#include "profkg/profiles.hpp"
#include "profkg/tensor.hpp"

namespace profkg {

enum class EncoderKind { hashed_bag_of_words, external_file };

struct EncoderSpec {
  EncoderKind kind = EncoderKind::hashed_bag_of_words;
  std::size_t dim = 1024;
  std::uint64_t hash_seed = 0;
  std::string path;       // external_file: SPKE matrix with one row per entity
  bool normalize = true;  // l2-normalize rows after encoding/loading
};

struct ProfileEmbeddingMatrix {
  Matrix<float> rows;  // N x d_s, row i belongs to entity i
  std::string encoder_tag;
};

// Lowercased runs of ASCII letters and digits.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (c < 128 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

inline std::size_t hash_bucket(std::string_view token, std::uint64_t seed, std::size_t dim) {
  return static_cast<std::size_t>(fnv1a64(token, 0xcbf29ce484222325ULL ^ splitmix64(seed)) % dim);
}

// Zero rows become e_0 so every row has unit norm afterwards.
template <typename Derived>
void normalize_row(Eigen::MatrixBase<Derived>&& row) {
  const double norm = static_cast<double>(row.norm());
  if (norm == 0.0) {
    row.setZero();
    row(0) = 1;
  } else {
    row /= static_cast<typename Derived::Scalar>(norm);
  }
}

inline void normalize_rows(Matrix<float>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) normalize_row(m.row(i));
}

inline Vector<float> encode_text(std::string_view text, const EncoderSpec& spec) {
  if (spec.dim < 1) throw Error(ErrorCode::dimension_mismatch, "encoder dimension must be >= 1");
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.dim));
  for (const std::string& tok : tokenize(text))
    counts(static_cast<Eigen::Index>(hash_bucket(tok, spec.hash_seed, spec.dim))) += 1.0;
  Vector<float> v = counts.cast<float>();
  if (spec.normalize) normalize_row(v.transpose());
  return v;
}

inline std::string encoder_tag(const EncoderSpec& spec) {
  if (spec.kind == EncoderKind::external_file) return "file:" + spec.path;
  return "hashbow-d" + std::to_string(spec.dim) + "-s" + std::to_string(spec.hash_seed) +
         (spec.normalize ? "" : "-raw");
}

inline ProfileEmbeddingMatrix encode_profiles(const ProfileStore& store, const EncoderSpec& spec) {
  const std::size_t n = store.entity_count();
  if (!store.complete())
    throw Error(ErrorCode::dimension_mismatch, "profile store covers " + std::to_string(store.size()) +
                                                   " of " + std::to_string(n) + " entities");
  ProfileEmbeddingMatrix out;
  out.encoder_tag = encoder_tag(spec);
  if (spec.kind == EncoderKind::external_file) {
    out.rows = read_matrix(spec.path);
    if (static_cast<std::size_t>(out.rows.rows()) != n)
      throw Error(ErrorCode::dimension_mismatch, spec.path + " has " + std::to_string(out.rows.rows()) +
                                                     " rows, expected " + std::to_string(n));
    if (!out.rows.allFinite()) throw Error(ErrorCode::non_finite_value, spec.path);
    if (spec.normalize) normalize_rows(out.rows);
    return out;
  }
  out.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.dim));
  for (std::size_t i = 0; i < n; ++i)
    out.rows.row(static_cast<Eigen::Index>(i)) = encode_text(store.at(entity_at(i)).text, spec).transpose();
  return out;
}

}  // namespace profkg
