// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "laiv/rng.hpp"
#include "laiv/vectorstore.hpp"

namespace laiv::test {

inline EmbeddingMatrix random_matrix(size_t n, uint32_t dim, uint64_t seed,
                                     double scale = 1.0) {
  Rng rng(seed);
  EmbeddingMatrix m(dim);
  m.reserve(n);
  std::vector<float> row(dim);
  for (size_t i = 0; i < n; ++i) {
    for (auto& x : row) {
      x = static_cast<float>(scale * rng.gaussian());
    }
    m.append(i, row);
  }
  return m;
}

inline std::vector<float> random_query(uint32_t dim, uint64_t seed,
                                       double scale = 1.0) {
  Rng rng(seed);
  std::vector<float> q(dim);
  for (auto& x : q) {
    x = static_cast<float>(scale * rng.gaussian());
  }
  return q;
}

// Unique scratch directory under the test runner's cwd, wiped on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::current_path() / ("laiv_scratch_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return {};
  std::string out;
  char buf[4096];
  size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) {
    out.append(buf, got);
  }
  std::fclose(f);
  return out;
}

} // namespace laiv::test
