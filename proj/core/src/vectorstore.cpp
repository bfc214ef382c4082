// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#include "laiv/vectorstore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace laiv {

namespace {

constexpr char kEmbeddingMagic[4] = {'L', 'A', 'I', 'V'};
constexpr uint32_t kEmbeddingVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  // Host is little-endian on every supported target; memcpy keeps this UB-free.
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& path, const char* what) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  if (!in) {
    throw std::runtime_error(path + ": truncated while reading " + what +
                             " at offset " + std::to_string(in.gcount()));
  }
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

} // namespace

std::string metric_name(Metric m) {
  return m == Metric::InnerProduct ? "ip" : "l2";
}

Metric metric_from_name(const std::string& name) {
  if (name == "ip" || name == "inner_product") return Metric::InnerProduct;
  if (name == "l2") return Metric::L2;
  throw std::invalid_argument("unknown metric: " + name);
}

EmbeddingMatrix::EmbeddingMatrix(uint32_t dim) : dim_(dim) {
  if (dim == 0) {
    throw std::invalid_argument("embedding dim must be positive");
  }
}

void EmbeddingMatrix::reserve(size_t n) {
  data_.reserve(n * dim_);
  ids_.reserve(n);
  id_to_row_.reserve(n);
}

void EmbeddingMatrix::append(uint64_t id, std::span<const float> row) {
  if (dim_ == 0) {
    throw std::invalid_argument("matrix has no dimension set");
  }
  if (row.size() != dim_) {
    throw std::invalid_argument("row has dim " + std::to_string(row.size()) +
                                ", expected " + std::to_string(dim_));
  }
  for (float v : row) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("non-finite component in row for id " +
                                  std::to_string(id));
    }
  }
  if (!id_to_row_.emplace(id, ids_.size()).second) {
    throw std::invalid_argument("duplicate id " + std::to_string(id));
  }
  ids_.push_back(id);
  data_.insert(data_.end(), row.begin(), row.end());
}

std::optional<size_t> EmbeddingMatrix::row_of(uint64_t id) const {
  auto it = id_to_row_.find(id);
  if (it == id_to_row_.end()) return std::nullopt;
  return it->second;
}

double dot_d(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

double l2_sq_d(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

float score_rounded(Metric m, std::span<const float> q,
                    std::span<const float> row) {
  const double s =
      m == Metric::InnerProduct ? dot_d(q, row) : std::sqrt(l2_sq_d(q, row));
  return static_cast<float>(s);
}

TopK exact_search(const EmbeddingMatrix& db, std::span<const float> q, int k,
                  Metric m) {
  if (k < 1) {
    throw std::invalid_argument("k must be >= 1");
  }
  if (!db.empty() && q.size() != db.dim()) {
    throw std::invalid_argument("query dim " + std::to_string(q.size()) +
                                " does not match db dim " +
                                std::to_string(db.dim()));
  }
  TopK result;
  result.k = k;
  result.entries.reserve(db.count());
  for (size_t i = 0; i < db.count(); ++i) {
    result.entries.push_back({db.id_at(i), score_rounded(m, q, db.row(i))});
  }
  const size_t keep = std::min<size_t>(k, result.entries.size());
  std::partial_sort(result.entries.begin(), result.entries.begin() + keep,
                    result.entries.end(),
                    [m](const ScoredId& a, const ScoredId& b) {
                      return ranks_before(m, a, b);
                    });
  result.entries.resize(keep);
  return result;
}

std::vector<float> pairwise_l2(const EmbeddingMatrix& a,
                               const EmbeddingMatrix& b) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("pairwise_l2: dim mismatch");
  }
  std::vector<float> out(a.count() * b.count());
  for (size_t i = 0; i < a.count(); ++i) {
    for (size_t j = 0; j < b.count(); ++j) {
      out[i * b.count() + j] =
          static_cast<float>(std::sqrt(l2_sq_d(a.row(i), b.row(j))));
    }
  }
  return out;
}

void save_embeddings(const std::string& path, const EmbeddingMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path);
  }
  out.write(kEmbeddingMagic, 4);
  write_le(out, kEmbeddingVersion);
  write_le(out, m.dim());
  write_le(out, static_cast<uint64_t>(m.count()));
  for (size_t i = 0; i < m.count(); ++i) {
    write_le(out, m.id_at(i));
    auto row = m.row(i);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path);
  }
}

EmbeddingMatrix load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open: " + path);
  }
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kEmbeddingMagic, 4) != 0) {
    throw std::runtime_error(path + ": bad magic at offset 0, not a LAIV file");
  }
  const auto version = read_le<uint32_t>(in, path, "version");
  if (version != kEmbeddingVersion) {
    throw std::runtime_error(path + ": unsupported version " +
                             std::to_string(version));
  }
  const auto dim = read_le<uint32_t>(in, path, "dim");
  const auto n = read_le<uint64_t>(in, path, "count");
  if (dim == 0) {
    throw std::runtime_error(path + ": header declares dim 0 at offset 8");
  }
  EmbeddingMatrix m(dim);
  m.reserve(n);
  std::vector<float> row(dim);
  for (uint64_t i = 0; i < n; ++i) {
    const uint64_t record_offset = 20 + i * (8 + 4ull * dim);
    const auto id = read_le<uint64_t>(in, path, "record id");
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(dim * sizeof(float)));
    if (!in) {
      throw std::runtime_error(
          path + ": truncated record " + std::to_string(i) + " at offset " +
          std::to_string(record_offset) +
          " (header dim/count disagree with file size)");
    }
    m.append(id, row);
  }
  return m;
}

EmbeddingMatrix load_embeddings_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open: " + path);
  }
  EmbeddingMatrix m;
  std::string line;
  size_t lineno = 0;
  std::vector<float> row;
  while (std::getline(in, line)) {
    ++lineno;
    for (char& c : line) {
      if (c == ',') c = ' ';
    }
    std::istringstream ss(line);
    uint64_t id;
    if (!(ss >> id)) {
      continue; // blank or comment-ish line
    }
    row.clear();
    float v;
    while (ss >> v) {
      row.push_back(v);
    }
    if (m.dim() == 0) {
      if (row.empty()) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": row has no components");
      }
      m = EmbeddingMatrix(static_cast<uint32_t>(row.size()));
    }
    if (row.size() != m.dim()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected " + std::to_string(m.dim()) +
                               " components, got " +
                               std::to_string(row.size()));
    }
    m.append(id, row);
  }
  return m;
}

} // namespace laiv
