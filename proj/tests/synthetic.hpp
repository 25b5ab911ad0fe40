#pragma once

// Well-separated Gaussian blobs with a matching corpus: sample i mentions
// entity "Q<blob>" as subject and object, relation "P<blob>".

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "okgc/okgc.hpp"

namespace okgc::synthetic {

struct Blobs {
  Corpus corpus;
  EmbeddingMatrix embeddings;
  std::vector<std::size_t> blob;
};

/// k <= dim blobs; noise is the expected norm of each point's offset.
inline Blobs make_blobs(std::size_t n, std::size_t k, std::size_t dim, std::uint64_t seed, float noise = 0.05f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  // Orthonormal centers (Gram-Schmidt), so blobs sit at cosine distance 1.
  std::vector<std::vector<double>> centers;
  while (centers.size() < k) {
    std::vector<double> c(dim);
    for (auto& x : c) x = g(rng);
    for (const auto& prev : centers) {
      double dot = 0.0;
      for (std::size_t j = 0; j < dim; ++j) dot += c[j] * prev[j];
      for (std::size_t j = 0; j < dim; ++j) c[j] -= dot * prev[j];
    }
    double norm = 0.0;
    for (double x : c) norm += x * x;
    for (auto& x : c) x /= std::sqrt(norm);
    centers.push_back(std::move(c));
  }
  Blobs b;
  b.embeddings = EmbeddingMatrix(n, dim, Slot::Subj, R"({"source":"synthetic"})");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % k;
    b.blob.push_back(c);
    auto row = b.embeddings.row(i);
    for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<float>(centers[c][j]) + noise * g(rng) / std::sqrt(float(dim));
    const std::string id = std::to_string(c);
    Sample s;
    s.id = i;
    s.tokens = {"e" + id, "r" + id, "o" + id};
    s.subj = {"e" + id, {0, 1}, "Q" + id, std::nullopt, {"C" + std::to_string(c % 3)}};
    s.rel = {"r" + id, {1, 2}, std::nullopt, "P" + id, {}};
    s.obj = {"o" + id, {2, 3}, "Q" + id, std::nullopt, {}};
    b.corpus.samples.push_back(std::move(s));
  }
  return b;
}

}  // namespace okgc::synthetic
