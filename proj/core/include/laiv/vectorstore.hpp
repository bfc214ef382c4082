// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace laiv {

/// Distance metric. InnerProduct ranks by descending score, L2 by ascending
/// distance; every ranking operation goes through ranks_before() so the
/// orientation lives in one place.
enum class Metric : uint8_t { InnerProduct = 0, L2 = 1 };

std::string metric_name(Metric m);
Metric metric_from_name(const std::string& name);

struct ScoredId {
  uint64_t id;
  float score;

  bool operator==(const ScoredId&) const = default;
};

/// True when `a` ranks strictly before `b` under metric `m`.
/// Ties on score are broken by ascending id so that every ranking in the
/// system is a strict total order (the merge-equality guarantees depend on
/// this).
inline bool ranks_before(Metric m, const ScoredId& a, const ScoredId& b) {
  if (a.score != b.score) {
    return m == Metric::InnerProduct ? a.score > b.score : a.score < b.score;
  }
  return a.id < b.id;
}

/// Best-first top-k result list.
struct TopK {
  int k = 0;
  std::vector<ScoredId> entries;

  bool operator==(const TopK&) const = default;
};

/// Dense row-major float32 vectors with stable integer ids.
class EmbeddingMatrix {
public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(uint32_t dim);

  void reserve(size_t n);

  /// Appends one row. Throws std::invalid_argument on dimension mismatch,
  /// non-finite components, or a duplicate id.
  void append(uint64_t id, std::span<const float> row);

  uint32_t dim() const { return dim_; }
  size_t count() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  std::span<const float> row(size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  uint64_t id_at(size_t i) const { return ids_[i]; }
  std::optional<size_t> row_of(uint64_t id) const;

  const std::vector<float>& data() const { return data_; }
  const std::vector<uint64_t>& ids() const { return ids_; }

  bool operator==(const EmbeddingMatrix& other) const {
    return dim_ == other.dim_ && ids_ == other.ids_ && data_ == other.data_;
  }

private:
  uint32_t dim_ = 0;
  std::vector<float> data_;
  std::vector<uint64_t> ids_;
  std::unordered_map<uint64_t, size_t> id_to_row_;
};

// Double-precision kernels. Scores are accumulated in 64-bit and rounded to
// float32 for reporting, so rankings are reproducible across platforms.
double dot_d(std::span<const float> a, std::span<const float> b);
double l2_sq_d(std::span<const float> a, std::span<const float> b);

/// Per-candidate score under `m`: inner product, or Euclidean distance for
/// L2. Accumulated in double, rounded to float32.
float score_rounded(Metric m, std::span<const float> q,
                    std::span<const float> row);

/// Exact brute-force search over all rows: the ground-truth oracle the rest
/// of the system is checked against. Empty db yields an empty TopK; a
/// dimension mismatch throws.
TopK exact_search(const EmbeddingMatrix& db, std::span<const float> q, int k,
                  Metric m);

/// Dense a.count() x b.count() matrix of Euclidean distances, row-major.
std::vector<float> pairwise_l2(const EmbeddingMatrix& a,
                               const EmbeddingMatrix& b);

// Binary embedding file: magic "LAIV", u32 version=1, u32 D, u64 N, then N
// records of (u64 id, D little-endian f32).
void save_embeddings(const std::string& path, const EmbeddingMatrix& m);
EmbeddingMatrix load_embeddings(const std::string& path);

// Whitespace/CSV text loader: one row per line, "id v1 v2 ... vD".
EmbeddingMatrix load_embeddings_text(const std::string& path);

} // namespace laiv
