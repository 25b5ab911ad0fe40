#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "okgc/error.hpp"

namespace okgc {

using Index = std::uint32_t;
using Cluster = std::vector<Index>;

/// A family of clusters over the occurrence indices {0..universe-1}.
///
/// Every element belongs to at least one cluster. When `overlapping()` is
/// false every element belongs to exactly one. Clusters are stored sorted and
/// never empty. The constructor validates all of this and throws
/// ErrorKind::InvalidClustering otherwise.
class Clustering {
 public:
  Clustering() = default;

  Clustering(std::vector<Cluster> clusters, bool overlapping, std::size_t universe)
      : clusters_(std::move(clusters)), overlapping_(overlapping), universe_(universe) {
    validate();
  }

  /// Partition from a dense label vector; cluster order follows first appearance.
  template <typename Label>
  static Clustering from_labels(std::span<const Label> labels) {
    std::unordered_map<Label, std::size_t> slot;
    std::vector<Cluster> clusters;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto [it, inserted] = slot.try_emplace(labels[i], clusters.size());
      if (inserted) clusters.emplace_back();
      clusters[it->second].push_back(static_cast<Index>(i));
    }
    return Clustering(std::move(clusters), false, labels.size());
  }

  template <typename Label>
  static Clustering from_labels(const std::vector<Label>& labels) {
    return from_labels(std::span<const Label>(labels));
  }

  const std::vector<Cluster>& clusters() const noexcept { return clusters_; }
  bool overlapping() const noexcept { return overlapping_; }
  std::size_t universe() const noexcept { return universe_; }
  std::size_t size() const noexcept { return clusters_.size(); }
  const Cluster& operator[](std::size_t i) const { return clusters_[i]; }

  /// Label of each element. Only meaningful for non-overlapping clusterings.
  std::vector<Index> labels() const {
    if (overlapping_) {
      throw Error(ErrorKind::OverlapNotAllowed, "labels() needs a non-overlapping clustering");
    }
    std::vector<Index> out(universe_);
    for (std::size_t c = 0; c < clusters_.size(); ++c) {
      for (Index x : clusters_[c]) out[x] = static_cast<Index>(c);
    }
    return out;
  }

  /// True when some element sits in two clusters (independent of the flag).
  bool has_shared_elements() const {
    std::vector<char> seen(universe_, 0);
    for (const auto& c : clusters_) {
      for (Index x : c) {
        if (seen[x]) return true;
        seen[x] = 1;
      }
    }
    return false;
  }

  friend bool operator==(const Clustering&, const Clustering&) = default;

 private:
  void validate() {
    std::vector<std::uint32_t> hits(universe_, 0);
    for (auto& c : clusters_) {
      if (c.empty()) throw Error(ErrorKind::InvalidClustering, "empty cluster");
      std::sort(c.begin(), c.end());
      if (std::adjacent_find(c.begin(), c.end()) != c.end()) {
        throw Error(ErrorKind::InvalidClustering, "duplicate element inside a cluster");
      }
      if (c.back() >= universe_) {
        throw Error(ErrorKind::InvalidClustering, "element outside the universe");
      }
      for (Index x : c) ++hits[x];
    }
    for (std::size_t x = 0; x < universe_; ++x) {
      if (hits[x] == 0) {
        throw Error(ErrorKind::InvalidClustering,
                    "element " + std::to_string(x) + " is not covered");
      }
      if (!overlapping_ && hits[x] > 1) {
        throw Error(ErrorKind::InvalidClustering,
                    "element " + std::to_string(x) + " appears in two clusters");
      }
    }
  }

  std::vector<Cluster> clusters_;
  bool overlapping_ = false;
  std::size_t universe_ = 0;
};

/// Element -> cluster ids, in CSR layout.
class Memberships {
 public:
  explicit Memberships(const Clustering& c) : offsets_(c.universe() + 1, 0) {
    for (const auto& cl : c.clusters()) {
      for (Index x : cl) ++offsets_[x + 1];
    }
    for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    ids_.resize(offsets_.back());
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t k = 0; k < c.size(); ++k) {
      for (Index x : c[k]) ids_[cursor[x]++] = static_cast<Index>(k);
    }
  }

  std::span<const Index> of(Index x) const {
    return {ids_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<Index> ids_;
};

}  // namespace okgc
