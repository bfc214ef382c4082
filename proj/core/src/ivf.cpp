// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#include "laiv/ivf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "laiv/rng.hpp"

namespace laiv {

namespace {

constexpr char kIndexMagic[4] = {'L', 'A', 'I', 'X'};
constexpr uint32_t kIndexVersion = 1;

uint64_t member_bytes(uint32_t dim) { return 4ull * dim + 8ull; }

std::vector<float> working_copy(const EmbeddingMatrix& db, bool spherical) {
  std::vector<float> data(db.data());
  if (!spherical) return data;
  const uint32_t d = db.dim();
  for (size_t i = 0; i < db.count(); ++i) {
    double norm_sq = 0.0;
    for (uint32_t j = 0; j < d; ++j) {
      norm_sq += static_cast<double>(data[i * d + j]) * data[i * d + j];
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > 0.0) {
      for (uint32_t j = 0; j < d; ++j) {
        data[i * d + j] = static_cast<float>(data[i * d + j] / norm);
      }
    }
  }
  return data;
}

double l2_sq_raw(const float* a, const float* b, uint32_t d) {
  double acc = 0.0;
  for (uint32_t j = 0; j < d; ++j) {
    const double diff = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    acc += diff * diff;
  }
  return acc;
}

// Nearest centroid under L2, ties by lowest cluster id.
uint32_t nearest_centroid(const float* x, const std::vector<float>& centroids,
                          uint32_t k, uint32_t d) {
  uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (uint32_t c = 0; c < k; ++c) {
    const double dist = l2_sq_raw(x, centroids.data() + c * size_t(d), d);
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return best;
}

} // namespace

IvfIndex::IvfIndex(EmbeddingMatrix centroids,
                   std::vector<std::vector<uint64_t>> lists, Metric metric)
    : centroids_(std::move(centroids)), lists_(std::move(lists)),
      metric_(metric) {
  if (centroids_.count() != lists_.size()) {
    throw std::invalid_argument("centroid/list count mismatch");
  }
  cluster_bytes_.reserve(lists_.size());
  const uint64_t per = member_bytes(centroids_.dim());
  for (const auto& l : lists_) {
    cluster_bytes_.push_back(per * l.size());
  }
}

uint64_t IvfIndex::total_payload_bytes() const {
  return std::accumulate(cluster_bytes_.begin(), cluster_bytes_.end(),
                         uint64_t{0});
}

size_t IvfIndex::total_vectors() const {
  size_t n = 0;
  for (const auto& l : lists_) n += l.size();
  return n;
}

EmbeddingMatrix kmeanspp_init(const EmbeddingMatrix& db, uint32_t k,
                              uint64_t seed, bool spherical) {
  if (k == 0 || k > db.count()) {
    throw std::invalid_argument("n_clusters must be in [1, N]");
  }
  const uint32_t d = db.dim();
  const size_t n = db.count();
  const std::vector<float> data = working_copy(db, spherical);

  Rng rng(derive_seed(seed, "kmeans++"));
  std::vector<size_t> chosen;
  chosen.reserve(k);
  std::vector<bool> is_chosen(n, false);

  const size_t first = rng.index(n);
  chosen.push_back(first);
  is_chosen[first] = true;

  std::vector<double> dist_sq(n);
  for (size_t i = 0; i < n; ++i) {
    dist_sq[i] = l2_sq_raw(data.data() + i * d, data.data() + first * d, d);
  }

  while (chosen.size() < k) {
    double total = 0.0;
    for (double w : dist_sq) total += w;
    size_t pick = n;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      for (size_t i = 0; i < n; ++i) {
        cum += dist_sq[i];
        if (cum > r) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = n - 1; // guard against fp summation slack
    }
    if (pick == n || is_chosen[pick]) {
      // All remaining mass sits on duplicates of chosen points; take the
      // lowest unchosen row to keep the init deterministic.
      pick = n;
      for (size_t i = 0; i < n; ++i) {
        if (!is_chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
    is_chosen[pick] = true;
    for (size_t i = 0; i < n; ++i) {
      const double nd =
          l2_sq_raw(data.data() + i * d, data.data() + pick * d, d);
      if (nd < dist_sq[i]) dist_sq[i] = nd;
    }
  }

  EmbeddingMatrix centroids(d);
  centroids.reserve(k);
  std::vector<float> row(d);
  for (uint32_t c = 0; c < k; ++c) {
    const float* src = data.data() + chosen[c] * d;
    std::copy(src, src + d, row.begin());
    centroids.append(c, row);
  }
  return centroids;
}

IvfIndex build_index(const EmbeddingMatrix& db, uint32_t n_clusters,
                     const IvfBuildOptions& opts, Metric metric) {
  if (db.count() == 0) {
    throw std::invalid_argument("cannot build an index over an empty store");
  }
  if (n_clusters == 0 || n_clusters > db.count()) {
    throw std::invalid_argument("n_clusters must be in [1, N]");
  }
  const uint32_t d = db.dim();
  const size_t n = db.count();
  const uint32_t k = n_clusters;
  const std::vector<float> data = working_copy(db, opts.spherical);

  EmbeddingMatrix init =
      kmeanspp_init(db, k, opts.seed, opts.spherical);
  std::vector<float> centroids(init.data());

  std::vector<uint32_t> assign(n, 0);
  std::vector<uint32_t> prev_assign;

  auto recompute_means = [&](const std::vector<uint32_t>& a) {
    std::vector<double> sums(size_t(k) * d, 0.0);
    std::vector<size_t> counts(k, 0);
    for (size_t i = 0; i < n; ++i) {
      counts[a[i]]++;
      for (uint32_t j = 0; j < d; ++j) {
        sums[a[i] * size_t(d) + j] += data[i * d + j];
      }
    }
    for (uint32_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (uint32_t j = 0; j < d; ++j) {
        centroids[c * size_t(d) + j] =
            static_cast<float>(sums[c * size_t(d) + j] / counts[c]);
      }
    }
  };

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    for (size_t i = 0; i < n; ++i) {
      assign[i] = nearest_centroid(data.data() + i * d, centroids, k, d);
    }

    // Empty-cluster repair: move the farthest point of the largest cluster
    // into each empty one, keeping N_c fixed.
    std::vector<std::vector<size_t>> members(k);
    for (size_t i = 0; i < n; ++i) members[assign[i]].push_back(i);
    for (uint32_t c = 0; c < k; ++c) {
      if (!members[c].empty()) continue;
      uint32_t donor = 0;
      size_t donor_size = 0;
      for (uint32_t c2 = 0; c2 < k; ++c2) {
        if (members[c2].size() > donor_size) {
          donor_size = members[c2].size();
          donor = c2;
        }
      }
      size_t far_point = members[donor].front();
      double far_dist = -1.0;
      for (size_t i : members[donor]) {
        const double dist = l2_sq_raw(data.data() + i * d,
                                      centroids.data() + donor * size_t(d), d);
        if (dist > far_dist) {
          far_dist = dist;
          far_point = i;
        }
      }
      members[donor].erase(
          std::find(members[donor].begin(), members[donor].end(), far_point));
      members[c].push_back(far_point);
      assign[far_point] = c;
      const float* src = data.data() + far_point * d;
      std::copy(src, src + d, centroids.begin() + c * size_t(d));
    }

    if (assign == prev_assign) break;
    prev_assign = assign;
    recompute_means(assign);
  }

  // Centroids are the means of the final assignment even when max_iters cut
  // the run short.
  recompute_means(assign);

  EmbeddingMatrix centroid_matrix(d);
  centroid_matrix.reserve(k);
  std::vector<float> row(d);
  for (uint32_t c = 0; c < k; ++c) {
    std::copy(centroids.begin() + c * size_t(d),
              centroids.begin() + (c + 1) * size_t(d), row.begin());
    centroid_matrix.append(c, row);
  }
  std::vector<std::vector<uint64_t>> lists(k);
  for (size_t i = 0; i < n; ++i) {
    lists[assign[i]].push_back(db.id_at(i));
  }
  return IvfIndex(std::move(centroid_matrix), std::move(lists), metric);
}

int default_nprobe(uint32_t n_clusters) {
  return std::max(1, static_cast<int>(std::lround(
                         4.0 * std::sqrt(static_cast<double>(n_clusters)))));
}

std::vector<uint32_t> rank_clusters(const IvfIndex& ix,
                                    std::span<const float> q) {
  if (q.size() != ix.dim()) {
    throw std::invalid_argument("query dim mismatch");
  }
  const uint32_t k = ix.num_clusters();
  std::vector<double> score(k);
  for (uint32_t c = 0; c < k; ++c) {
    score[c] = ix.metric() == Metric::InnerProduct
                   ? dot_d(q, ix.centroids().row(c))
                   : l2_sq_d(q, ix.centroids().row(c));
  }
  std::vector<uint32_t> order(k);
  std::iota(order.begin(), order.end(), 0u);
  const bool descending = ix.metric() == Metric::InnerProduct;
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    if (score[a] != score[b]) {
      return descending ? score[a] > score[b] : score[a] < score[b];
    }
    return a < b;
  });
  return order;
}

std::vector<uint32_t> coarse_probe(const IvfIndex& ix,
                                   std::span<const float> q, int L) {
  auto order = rank_clusters(ix, q);
  const size_t keep = std::min<size_t>(std::max(L, 0), order.size());
  order.resize(keep);
  return order;
}

std::vector<ScoredId> score_clusters(const IvfIndex& ix,
                                     const EmbeddingMatrix& db,
                                     std::span<const float> q,
                                     std::span<const uint32_t> clusters) {
  if (q.size() != db.dim()) {
    throw std::invalid_argument("query dim mismatch");
  }
  std::vector<ScoredId> out;
  for (uint32_t c : clusters) {
    if (c >= ix.num_clusters()) {
      throw std::invalid_argument("unknown cluster id " + std::to_string(c));
    }
    for (uint64_t id : ix.list(c)) {
      const auto row = db.row_of(id);
      if (!row) {
        throw std::runtime_error("index references id " + std::to_string(id) +
                                 " missing from the datastore");
      }
      out.push_back({id, score_rounded(ix.metric(), q, db.row(*row))});
    }
  }
  return out;
}

TopK search_clusters(const IvfIndex& ix, const EmbeddingMatrix& db,
                     std::span<const float> q,
                     std::span<const uint32_t> clusters, int k) {
  if (k < 1) {
    throw std::invalid_argument("k must be >= 1");
  }
  TopK result;
  result.k = k;
  result.entries = score_clusters(ix, db, q, clusters);
  const size_t keep = std::min<size_t>(k, result.entries.size());
  const Metric m = ix.metric();
  std::partial_sort(result.entries.begin(), result.entries.begin() + keep,
                    result.entries.end(),
                    [m](const ScoredId& a, const ScoredId& b) {
                      return ranks_before(m, a, b);
                    });
  result.entries.resize(keep);
  return result;
}

TopK ivf_search(const IvfIndex& ix, const EmbeddingMatrix& db,
                std::span<const float> q, int L, int k) {
  const auto probe = coarse_probe(ix, q, L);
  return search_clusters(ix, db, q, probe, k);
}

void save_index(const std::string& path, const IvfIndex& ix,
                const EmbeddingMatrix& db) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path);
  }
  auto put = [&out](const auto& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  out.write(kIndexMagic, 4);
  put(kIndexVersion);
  const uint32_t dim = ix.dim();
  const uint32_t nc = ix.num_clusters();
  put(dim);
  put(nc);
  const uint8_t metric = static_cast<uint8_t>(ix.metric());
  put(metric);
  for (uint32_t c = 0; c < nc; ++c) {
    auto row = ix.centroids().row(c);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  for (uint32_t c = 0; c < nc; ++c) {
    const auto& list = ix.list(c);
    const uint64_t len = list.size();
    put(len);
    for (uint64_t id : list) put(id);
    for (uint64_t id : list) {
      const auto rowi = db.row_of(id);
      if (!rowi) {
        throw std::runtime_error("save_index: id " + std::to_string(id) +
                                 " missing from the datastore");
      }
      auto row = db.row(*rowi);
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path);
  }
}

std::pair<IvfIndex, EmbeddingMatrix> load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open: " + path);
  }
  auto get = [&in, &path](auto& v, const char* what) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) {
      throw std::runtime_error(path + ": truncated while reading " + what);
    }
  };
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kIndexMagic, 4) != 0) {
    throw std::runtime_error(path + ": bad magic, not a LAIX file");
  }
  uint32_t version, dim, nc;
  get(version, "version");
  if (version != kIndexVersion) {
    throw std::runtime_error(path + ": unsupported version " +
                             std::to_string(version));
  }
  get(dim, "dim");
  get(nc, "cluster count");
  uint8_t metric_byte;
  get(metric_byte, "metric");
  if (metric_byte > 1) {
    throw std::runtime_error(path + ": bad metric byte");
  }
  if (dim == 0) {
    throw std::runtime_error(path + ": header declares dim 0");
  }
  EmbeddingMatrix centroids(dim);
  centroids.reserve(nc);
  std::vector<float> row(dim);
  for (uint32_t c = 0; c < nc; ++c) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(dim * sizeof(float)));
    if (!in) {
      throw std::runtime_error(path + ": truncated centroid block");
    }
    centroids.append(c, row);
  }
  EmbeddingMatrix db(dim);
  std::vector<std::vector<uint64_t>> lists(nc);
  for (uint32_t c = 0; c < nc; ++c) {
    uint64_t len;
    get(len, "cluster length");
    lists[c].resize(len);
    for (uint64_t i = 0; i < len; ++i) {
      get(lists[c][i], "member id");
    }
    for (uint64_t i = 0; i < len; ++i) {
      in.read(reinterpret_cast<char*>(row.data()),
              static_cast<std::streamsize>(dim * sizeof(float)));
      if (!in) {
        throw std::runtime_error(path + ": truncated cluster " +
                                 std::to_string(c));
      }
      db.append(lists[c][i], row);
    }
  }
  return {IvfIndex(std::move(centroids), std::move(lists),
                   static_cast<Metric>(metric_byte)),
          std::move(db)};
}

} // namespace laiv
