#pragma once

// Phrase-embedding matrices and the cosine geometry used by clustering.
//
// CEMB file layout (little-endian):
//   "CEMB" | u16 version=1 | u8 slot | u8 reserved=0 | u32 N | u32 D |
//   u32 meta_len | meta_len bytes of UTF-8 JSON | N*D f32, row-major.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "okgc/corpus.hpp"
#include "okgc/error.hpp"

namespace okgc {

inline constexpr std::uint16_t kCembVersion = 1;
inline constexpr double kStdEpsilon = 1e-8;

struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;  // row-major
  Slot slot = Slot::Subj;
  std::string meta;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t n, std::size_t d, Slot s = Slot::Subj, std::string m = {})
      : rows(n), cols(d), data(n * d, 0.0f), slot(s), meta(std::move(m)) {}

  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

/// Rows `ids` of `e`, in order.
inline EmbeddingMatrix select_rows(const EmbeddingMatrix& e, std::span<const Index> ids) {
  EmbeddingMatrix out(ids.size(), e.cols, e.slot, e.meta);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto src = e.row(ids[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// CEMB I/O

namespace detail {

template <typename U>
void put_le(std::string& buf, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t b = 0; b < sizeof(U); ++b) buf.push_back(static_cast<char>((value >> (8 * b)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(p[b]) << (8 * b);
  return v;
}

}  // namespace detail

inline std::string encode_cemb(const EmbeddingMatrix& e) {
  std::string buf = "CEMB";
  detail::put_le<std::uint16_t>(buf, kCembVersion);
  detail::put_le<std::uint8_t>(buf, static_cast<std::uint8_t>(e.slot));
  detail::put_le<std::uint8_t>(buf, 0);
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(e.rows));
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(e.cols));
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(e.meta.size()));
  buf += e.meta;
  buf.reserve(buf.size() + e.data.size() * 4);
  for (float f : e.data) detail::put_le(buf, std::bit_cast<std::uint32_t>(f));
  return buf;
}

/// Parses a CEMB byte image. `expected_n`, when set, must equal the header N.
inline EmbeddingMatrix decode_cemb(std::string_view bytes,
                                   std::optional<std::size_t> expected_n = std::nullopt) {
  constexpr std::size_t kHeader = 4 + 2 + 1 + 1 + 4 + 4 + 4;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4 || bytes.substr(0, 4) != "CEMB") {
    throw Error(ErrorKind::BadMagic, "not a CEMB file");
  }
  if (bytes.size() < kHeader) throw Error(ErrorKind::TruncatedFile, "header is incomplete");
  const auto version = detail::get_le<std::uint16_t>(p + 4);
  if (version != kCembVersion) {
    throw Error(ErrorKind::VersionMismatch, "unsupported CEMB version " + std::to_string(version));
  }
  const auto slot = p[6];
  if (slot > 2) throw Error(ErrorKind::BadMagic, "invalid slot byte " + std::to_string(slot));
  const auto n = detail::get_le<std::uint32_t>(p + 8);
  const auto d = detail::get_le<std::uint32_t>(p + 12);
  const auto meta_len = detail::get_le<std::uint32_t>(p + 16);
  if (expected_n && *expected_n != n) {
    throw Error(ErrorKind::CountMismatch, "file has " + std::to_string(n) + " rows, corpus has " +
                                              std::to_string(*expected_n));
  }
  const std::size_t payload = static_cast<std::size_t>(n) * d * 4;
  if (bytes.size() < kHeader + meta_len + payload) {
    throw Error(ErrorKind::TruncatedFile, "expected " + std::to_string(kHeader + meta_len + payload) +
                                              " bytes, found " + std::to_string(bytes.size()));
  }
  EmbeddingMatrix e(n, d, static_cast<Slot>(slot), std::string(bytes.substr(kHeader, meta_len)));
  const unsigned char* q = p + kHeader + meta_len;
  for (std::size_t k = 0; k < e.data.size(); ++k) {
    e.data[k] = std::bit_cast<float>(detail::get_le<std::uint32_t>(q + 4 * k));
  }
  for (std::size_t k = 0; k < e.data.size(); ++k) {
    if (!std::isfinite(e.data[k])) {
      throw Error(ErrorKind::DegenerateInput, "non-finite entry in row " + std::to_string(k / d), k / d);
    }
  }
  return e;
}

inline EmbeddingMatrix read_embeddings(const std::string& path,
                                       std::optional<std::size_t> expected_n = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open embeddings '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_cemb(bytes, expected_n);
}

inline void write_embeddings(const EmbeddingMatrix& e, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write embeddings '" + path + "'");
  const std::string bytes = encode_cemb(e);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "short write to '" + path + "'");
}

// ---------------------------------------------------------------------------
// Standardization

/// Per-column z-scoring with population statistics; sigma is floored at
/// kStdEpsilon so constant columns map to zero.
inline EmbeddingMatrix standardize(const EmbeddingMatrix& e) {
  if (e.rows < 2) throw Error(ErrorKind::DegenerateInput, "standardization needs at least 2 rows");
  const double n = static_cast<double>(e.rows);
  std::vector<double> mean(e.cols, 0.0), sd(e.cols, 0.0);
  for (std::size_t i = 0; i < e.rows; ++i) {
    const auto r = e.row(i);
    for (std::size_t c = 0; c < e.cols; ++c) mean[c] += r[c];
  }
  for (auto& m : mean) m /= n;
  for (std::size_t i = 0; i < e.rows; ++i) {
    const auto r = e.row(i);
    for (std::size_t c = 0; c < e.cols; ++c) {
      const double dev = r[c] - mean[c];
      sd[c] += dev * dev;
    }
  }
  for (auto& s : sd) s = std::max(std::sqrt(s / n), kStdEpsilon);

  EmbeddingMatrix out(e.rows, e.cols, e.slot, e.meta);
  for (std::size_t i = 0; i < e.rows; ++i) {
    const auto src = e.row(i);
    auto dst = out.row(i);
    for (std::size_t c = 0; c < e.cols; ++c) {
      dst[c] = static_cast<float>((src[c] - mean[c]) / sd[c]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cosine geometry

namespace detail {

/// Dot product in double with a fixed summation order; every distance in the
/// library goes through it.
inline double dot(std::span<const float> u, std::span<const float> v) {
  std::array<double, 4> acc{};
  const std::size_t n = u.size();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    acc[0] += static_cast<double>(u[k]) * v[k];
    acc[1] += static_cast<double>(u[k + 1]) * v[k + 1];
    acc[2] += static_cast<double>(u[k + 2]) * v[k + 2];
    acc[3] += static_cast<double>(u[k + 3]) * v[k + 3];
  }
  for (; k < n; ++k) acc[0] += static_cast<double>(u[k]) * v[k];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

inline double norm(std::span<const float> u) { return std::sqrt(dot(u, u)); }

inline double cosine_from(double uv, double nu, double nv) {
  return std::clamp(1.0 - uv / (nu * nv), 0.0, 2.0);
}

}  // namespace detail

/// 1 - cos(u, v), clamped into [0, 2].
inline double cosine_distance(std::span<const float> u, std::span<const float> v) {
  const double nu = detail::norm(u);
  const double nv = detail::norm(v);
  if (nu == 0.0 || nv == 0.0) throw Error(ErrorKind::ZeroNorm, "cosine distance of a zero vector");
  return detail::cosine_from(detail::dot(u, v), nu, nv);
}

/// Condensed upper triangle of an n x n distance matrix, 32-bit entries.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), data_(n < 2 ? 0 : n * (n - 1) / 2, 0.0f) {}
  DistanceMatrix(std::size_t n, std::vector<float> condensed) : n_(n), data_(std::move(condensed)) {
    if (data_.size() != (n < 2 ? 0 : n * (n - 1) / 2)) {
      throw Error(ErrorKind::CountMismatch, "condensed length does not match n");
    }
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t size() const noexcept { return data_.size(); }

  /// Offset of pair (i, j), i < j.
  std::size_t offset(std::size_t i, std::size_t j) const noexcept {
    return n_ * i - i * (i + 1) / 2 + (j - i - 1);
  }

  float operator()(std::size_t i, std::size_t j) const noexcept {
    if (i == j) return 0.0f;
    return i < j ? data_[offset(i, j)] : data_[offset(j, i)];
  }

  float& at(std::size_t i, std::size_t j) noexcept {
    return i < j ? data_[offset(i, j)] : data_[offset(j, i)];
  }

  std::span<const float> condensed() const noexcept { return data_; }
  std::span<float> condensed() noexcept { return data_; }

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<float> data_;
};

/// All pairwise cosine distances. Rows are split into interleaved blocks
/// across `threads` workers; every entry is written by exactly one worker,
/// so the result does not depend on the thread count.
inline DistanceMatrix pairwise_distances(const EmbeddingMatrix& e, unsigned threads = 0) {
  const std::size_t n = e.rows;
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = detail::norm(e.row(i));
    if (norms[i] == 0.0) throw Error(ErrorKind::ZeroNorm, "row " + std::to_string(i) + " has zero norm", i);
  }
  DistanceMatrix d(n);
  if (n < 2) return d;

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n - 1));
  auto out = d.condensed();
  auto work = [&](unsigned worker) {
    constexpr std::size_t kBlock = 16;
    for (std::size_t b = worker * kBlock; b < n; b += static_cast<std::size_t>(threads) * kBlock) {
      const std::size_t stop = std::min(n, b + kBlock);
      for (std::size_t i = b; i < stop; ++i) {
        const auto ri = e.row(i);
        float* dst = out.data() + d.offset(i, i + 1);
        for (std::size_t j = i + 1; j < n; ++j) {
          *dst++ = static_cast<float>(detail::cosine_from(detail::dot(ri, e.row(j)), norms[i], norms[j]));
        }
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Baseline phrase embeddings

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Standard-normal vector for `token`, a pure function of (seed, token, dim).
inline std::vector<float> token_vector(std::string_view token, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a(token))));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(normal(rng));
  return v;
}

struct WordVectorTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<float>> vectors;

  const std::vector<float>* find(const std::string& token) const {
    auto it = vectors.find(token);
    return it == vectors.end() ? nullptr : &it->second;
  }
};

/// GloVe-style text: `token v1 v2 ... vD` per line. A leading word2vec
/// "count dim" header line is skipped.
inline WordVectorTable read_word_vectors(std::istream& in) {
  WordVectorTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<float> v;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        v.push_back(std::stof(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw Error(ErrorKind::MalformedRecord,
                    "word vectors line " + std::to_string(lineno) + ": bad number '" + field + "'", lineno);
      }
    }
    if (lineno == 1 && v.size() == 1 && token.find_first_not_of("0123456789") == std::string::npos) {
      continue;
    }
    if (v.empty()) {
      throw Error(ErrorKind::MalformedRecord, "word vectors line " + std::to_string(lineno) + ": no values", lineno);
    }
    if (table.dim == 0) table.dim = v.size();
    if (v.size() != table.dim) {
      throw Error(ErrorKind::MalformedRecord,
                  "word vectors line " + std::to_string(lineno) + ": expected " +
                      std::to_string(table.dim) + " values, found " + std::to_string(v.size()),
                  lineno);
    }
    table.vectors.insert_or_assign(std::move(token), std::move(v));
  }
  return table;
}

inline WordVectorTable load_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open word vectors '" + path + "'");
  return read_word_vectors(in);
}

namespace detail {

template <typename Lookup>
EmbeddingMatrix average_tokens(const Corpus& corpus, Slot slot, std::size_t dim, Lookup&& lookup,
                               std::string meta) {
  EmbeddingMatrix e(corpus.size(), dim, slot, std::move(meta));
  std::vector<double> acc(dim);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const auto tokens = corpus[i].phrase_tokens(slot);
    for (const auto& tok : tokens) {
      const auto& v = lookup(tok);
      for (std::size_t c = 0; c < dim; ++c) acc[c] += v[c];
    }
    auto dst = e.row(i);
    for (std::size_t c = 0; c < dim; ++c) dst[c] = static_cast<float>(acc[c] / static_cast<double>(tokens.size()));
  }
  return e;
}

}  // namespace detail

/// Random-embedding baseline: each distinct token gets a seeded standard-normal
/// vector and a phrase is the mean of its tokens.
inline EmbeddingMatrix random_embeddings(const Corpus& corpus, Slot slot, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error(ErrorKind::InvalidConfig, "embedding dimension must be positive");
  std::unordered_map<std::string, std::vector<float>> cache;
  auto lookup = [&](const std::string& tok) -> const std::vector<float>& {
    auto it = cache.find(tok);
    if (it == cache.end()) it = cache.emplace(tok, token_vector(tok, dim, seed)).first;
    return it->second;
  };
  nlohmann::json meta = {{"source", "random"}, {"dim", dim}, {"seed", seed}};
  return detail::average_tokens(corpus, slot, dim, lookup, meta.dump());
}

/// Static word-vector baseline. Out-of-vocabulary tokens fall back to the
/// seeded random vector of random_embeddings.
inline EmbeddingMatrix compose_static(const Corpus& corpus, Slot slot, const WordVectorTable& table,
                                      std::uint64_t seed) {
  if (table.vectors.empty() || table.dim == 0) {
    throw Error(ErrorKind::InvalidConfig, "word vector table is empty");
  }
  std::unordered_map<std::string, std::vector<float>> oov;
  auto lookup = [&](const std::string& tok) -> const std::vector<float>& {
    if (const auto* v = table.find(tok)) return *v;
    auto it = oov.find(tok);
    if (it == oov.end()) it = oov.emplace(tok, token_vector(tok, table.dim, seed)).first;
    return it->second;
  };
  nlohmann::json meta = {{"source", "static"}, {"dim", table.dim}, {"seed", seed}};
  return detail::average_tokens(corpus, slot, table.dim, lookup, meta.dump());
}

}  // namespace okgc
