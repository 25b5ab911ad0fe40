#pragma once

// Complete-linkage agglomerative clustering over a condensed distance matrix.
//
// Both builders apply the Lance-Williams update d(k, i+j) = max(d(k, i), d(k, j))
// in place on the condensed matrix they consume. hac_complete merges greedily
// with an explicit tie rule; hac_complete_nn_chain is the nearest-neighbour
// chain algorithm, which agrees with it whenever distances are distinct.
// Internal node n+k is always created by merge k.

#include <algorithm>
#include <functional>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "okgc/clustering.hpp"
#include "okgc/embedding.hpp"
#include "okgc/error.hpp"

namespace okgc {

struct Merge {
  Index left = 0;   // smaller node id
  Index right = 0;  // larger node id
  double height = 0.0;

  friend bool operator==(const Merge&, const Merge&) = default;
};

class Dendrogram {
 public:
  Dendrogram() = default;
  Dendrogram(std::size_t n_leaves, std::vector<Merge> merges)
      : n_leaves_(n_leaves), merges_(std::move(merges)) {
    validate();
  }

  std::size_t n_leaves() const noexcept { return n_leaves_; }
  const std::vector<Merge>& merges() const noexcept { return merges_; }
  std::size_t n_nodes() const noexcept { return n_leaves_ == 0 ? 0 : n_leaves_ + merges_.size(); }

  /// Height of a node; leaves sit at 0.
  double height(Index node) const noexcept {
    return node < n_leaves_ ? 0.0 : merges_[node - n_leaves_].height;
  }

  /// Number of merges with height <= tau (merges are sorted by height).
  std::size_t merges_within(double tau) const noexcept {
    return static_cast<std::size_t>(
        std::upper_bound(merges_.begin(), merges_.end(), tau,
                         [](double t, const Merge& m) { return t < m.height; }) -
        merges_.begin());
  }

  /// Parent of every node; the root (and leaves of a 1-leaf tree) get -1.
  std::vector<std::int64_t> parents() const {
    std::vector<std::int64_t> parent(n_nodes(), -1);
    for (std::size_t k = 0; k < merges_.size(); ++k) {
      parent[merges_[k].left] = static_cast<std::int64_t>(n_leaves_ + k);
      parent[merges_[k].right] = static_cast<std::int64_t>(n_leaves_ + k);
    }
    return parent;
  }

  friend bool operator==(const Dendrogram&, const Dendrogram&) = default;

 private:
  void validate() const {
    if (n_leaves_ > 0 && merges_.size() != n_leaves_ - 1) {
      throw Error(ErrorKind::InvalidClustering, "dendrogram needs n_leaves - 1 merges");
    }
    std::vector<char> used(n_nodes(), 0);
    double prev = 0.0;
    for (std::size_t k = 0; k < merges_.size(); ++k) {
      const Merge& m = merges_[k];
      const std::size_t self = n_leaves_ + k;
      if (m.left >= self || m.right >= self || m.left == m.right || used[m.left] || used[m.right]) {
        throw Error(ErrorKind::InvalidClustering, "malformed merge " + std::to_string(k));
      }
      if (!(m.height >= prev)) {
        throw Error(ErrorKind::InvalidClustering, "merge heights must be non-decreasing");
      }
      used[m.left] = used[m.right] = 1;
      prev = m.height;
    }
  }

  std::size_t n_leaves_ = 0;
  std::vector<Merge> merges_;
};

namespace detail {

struct UnionFind {
  std::vector<Index> parent;

  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), Index{0}); }

  Index find(Index x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
};

}  // namespace detail

/// Complete-linkage dendrogram by the nearest-neighbour chain. Consumes the
/// matrix. Merges are sorted by height and relabelled afterwards.
///
/// Nearest neighbours are found by a scan in increasing slot order with a
/// strict comparison, so among equal distances the chain predecessor wins,
/// then the smallest slot. With distinct distances the result is the unique
/// complete-linkage hierarchy.
inline Dendrogram hac_complete_nn_chain(DistanceMatrix&& dist) {
  const std::size_t n = dist.n();
  if (n == 0) throw Error(ErrorKind::DegenerateInput, "clustering needs at least one item");
  if (n == 1) return Dendrogram(1, {});

  // Active slots form a sorted doubly linked list; sentinel at n.
  std::vector<std::size_t> next(n + 1), prev(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    next[i] = i + 1;
    prev[i] = i == 0 ? n : i - 1;
  }
  next[n] = 0;
  prev[0] = n;
  auto deactivate = [&](std::size_t i) {
    next[prev[i]] = next[i];
    prev[next[i]] = prev[i];
  };

  struct RawMerge {
    std::size_t a, b;
    float height;
  };
  std::vector<RawMerge> raw;
  raw.reserve(n - 1);
  std::vector<std::size_t> chain;
  chain.reserve(n);

  auto data = dist.condensed();
  for (std::size_t step = 0; step + 1 < n; ++step) {
    if (chain.empty()) chain.push_back(next[n]);
    std::size_t x = 0, y = 0;
    float best = 0.0f;
    for (;;) {
      x = chain.back();
      best = std::numeric_limits<float>::infinity();
      if (chain.size() > 1) {
        y = chain[chain.size() - 2];
        best = dist(x, y);
      }
      // Scan slots below x (column entries) then above x (contiguous row).
      for (std::size_t i = next[n]; i < x; i = next[i]) {
        const float d = data[dist.offset(i, x)];
        if (d < best) {
          best = d;
          y = i;
        }
      }
      for (std::size_t i = next[x]; i < n; i = next[i]) {
        const float d = data[dist.offset(x, i)];
        if (d < best) {
          best = d;
          y = i;
        }
      }
      if (chain.size() > 1 && y == chain[chain.size() - 2]) break;
      chain.push_back(y);
    }
    chain.pop_back();
    chain.pop_back();
    if (x > y) std::swap(x, y);
    raw.push_back({x, y, best});

    // Merged cluster lives in slot y; slot x retires.
    deactivate(x);
    for (std::size_t i = next[n]; i < n; i = next[i]) {
      if (i == y) continue;
      float& dy = dist.at(i, y);
      dy = std::max(dy, dist(i, x));
    }
  }

  std::stable_sort(raw.begin(), raw.end(),
                   [](const RawMerge& l, const RawMerge& r) { return l.height < r.height; });

  detail::UnionFind uf(n);
  std::vector<Index> node_of(n);
  std::iota(node_of.begin(), node_of.end(), Index{0});
  std::vector<Merge> merges;
  merges.reserve(n - 1);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const Index ra = uf.find(static_cast<Index>(raw[k].a));
    const Index rb = uf.find(static_cast<Index>(raw[k].b));
    const Index na = node_of[ra], nb = node_of[rb];
    merges.push_back({std::min(na, nb), std::max(na, nb), static_cast<double>(raw[k].height)});
    uf.parent[ra] = rb;
    node_of[rb] = static_cast<Index>(n + k);
  }
  return Dendrogram(n, std::move(merges));
}

/// Complete-linkage dendrogram by global greedy merging. Each step merges the
/// closest active pair; ties go to the lexicographically smallest
/// (node id, node id) pair. Consumes the matrix.
///
/// Every cluster keeps its nearest neighbour among larger node ids in a lazy
/// heap. Clusters whose neighbour was just merged are rescanned when they
/// surface; the others only compare against the new cluster.
inline Dendrogram hac_complete(DistanceMatrix&& dist) {
  const std::size_t n = dist.n();
  if (n == 0) throw Error(ErrorKind::DegenerateInput, "clustering needs at least one item");
  if (n == 1) return Dendrogram(1, {});

  std::vector<std::size_t> next(n + 1), prev(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    next[i] = i + 1;
    prev[i] = i == 0 ? n : i - 1;
  }
  next[n] = 0;
  prev[0] = n;

  constexpr float kNone = std::numeric_limits<float>::infinity();
  std::vector<Index> node(n);
  std::iota(node.begin(), node.end(), Index{0});
  std::vector<std::size_t> nn(n, n);
  std::vector<float> mindist(n, kNone);
  std::vector<char> stale(n, 0);

  struct Entry {
    float d;
    Index node;
    std::size_t slot;
    bool operator>(const Entry& o) const { return d != o.d ? d > o.d : node > o.node; }
  };
  std::vector<Entry> heap;
  auto push = [&](std::size_t slot) {
    heap.push_back({mindist[slot], node[slot], slot});
    std::push_heap(heap.begin(), heap.end(), std::greater<>{});
  };
  auto data = dist.condensed();
  auto refresh = [&](std::size_t x) {
    float best = kNone;
    std::size_t arg = n;
    const Index nx = node[x];
    for (std::size_t i = next[n]; i < x; i = next[i]) {
      if (node[i] < nx) continue;
      const float d = data[dist.offset(i, x)];
      if (d < best || (d == best && node[i] < node[arg])) {
        best = d;
        arg = i;
      }
    }
    for (std::size_t i = next[x]; i < n; i = next[i]) {
      if (node[i] < nx) continue;
      const float d = data[dist.offset(x, i)];
      if (d < best || (d == best && node[i] < node[arg])) {
        best = d;
        arg = i;
      }
    }
    nn[x] = arg;
    mindist[x] = best;
    stale[x] = 0;
  };
  for (std::size_t x = 0; x + 1 < n; ++x) {
    refresh(x);
    push(x);
  }

  std::vector<Merge> merges;
  merges.reserve(n - 1);
  while (merges.size() + 1 < n) {
    if (heap.empty()) throw Error(ErrorKind::DegenerateInput, "agglomeration ran out of candidate pairs");
    std::pop_heap(heap.begin(), heap.end(), std::greater<>{});
    const Entry top = heap.back();
    heap.pop_back();
    const std::size_t a = top.slot;
    if (node[a] != top.node || prev[next[a]] != a || top.d != mindist[a] || nn[a] == n) continue;
    if (stale[a]) {
      refresh(a);
      if (nn[a] != n) push(a);
      continue;
    }
    const std::size_t b = nn[a];
    merges.push_back({node[a], node[b], static_cast<double>(top.d)});

    // Merged cluster lives in the larger slot.
    const std::size_t x = std::min(a, b), y = std::max(a, b);
    next[prev[x]] = next[x];
    prev[next[x]] = prev[x];
    node[y] = static_cast<Index>(n + merges.size() - 1);
    nn[y] = n;
    mindist[y] = kNone;
    for (std::size_t i = next[n]; i < n; i = next[i]) {
      if (i == y) continue;
      float& dy = dist.at(i, y);
      dy = std::max(dy, dist(i, x));
      if (nn[i] == x || nn[i] == y) {
        stale[i] = 1;
      } else if (dy < mindist[i]) {
        nn[i] = y;
        mindist[i] = dy;
        push(i);
      }
    }
  }
  return Dendrogram(n, std::move(merges));
}

inline Dendrogram hac_complete(const DistanceMatrix& dist) {
  DistanceMatrix copy = dist;
  return hac_complete(std::move(copy));
}

inline Dendrogram hac_complete_nn_chain(const DistanceMatrix& dist) {
  DistanceMatrix copy = dist;
  return hac_complete_nn_chain(std::move(copy));
}

/// Flat clustering from the maximal nodes with height <= tau. Clusters are
/// ordered by their smallest leaf.
inline Clustering cut(const Dendrogram& d, double tau) {
  const std::size_t n = d.n_leaves();
  const std::size_t k = d.merges_within(tau);
  detail::UnionFind uf(n);
  std::vector<Index> leaf_of(n + k);  // any leaf below each node
  std::iota(leaf_of.begin(), leaf_of.begin() + static_cast<std::ptrdiff_t>(n), Index{0});
  for (std::size_t m = 0; m < k; ++m) {
    const Merge& mg = d.merges()[m];
    const Index a = uf.find(leaf_of[mg.left]);
    const Index b = uf.find(leaf_of[mg.right]);
    uf.parent[std::max(a, b)] = std::min(a, b);
    leaf_of[n + m] = std::min(a, b);
  }
  std::vector<Index> labels(n);
  for (Index i = 0; i < n; ++i) labels[i] = uf.find(i);
  return Clustering::from_labels(labels);
}

/// Leaf sets of every node (leaves included) with height <= tau, leaves
/// first, then internal nodes in merge order. Always a laminar family.
inline Clustering overlapping_cut(const Dendrogram& d, double tau) {
  const std::size_t n = d.n_leaves();
  const std::size_t k = d.merges_within(tau);
  std::vector<Cluster> nodes;
  nodes.reserve(n + k);
  for (Index i = 0; i < n; ++i) nodes.push_back({i});
  for (std::size_t m = 0; m < k; ++m) {
    const Merge& mg = d.merges()[m];
    Cluster merged;
    merged.reserve(nodes[mg.left].size() + nodes[mg.right].size());
    std::merge(nodes[mg.left].begin(), nodes[mg.left].end(), nodes[mg.right].begin(),
               nodes[mg.right].end(), std::back_inserter(merged));
    nodes.push_back(std::move(merged));
  }
  return Clustering(std::move(nodes), true, n);
}

// Text form: "n_leaves <n>" then one "left right height" line per merge.

inline void write_dendrogram(const Dendrogram& d, std::ostream& out) {
  out << "n_leaves " << d.n_leaves() << '\n';
  const auto old_precision = out.precision(9);
  for (const Merge& m : d.merges()) out << m.left << ' ' << m.right << ' ' << m.height << '\n';
  out.precision(old_precision);
}

inline Dendrogram read_dendrogram(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw Error(ErrorKind::MalformedRecord, "empty dendrogram file", 1);
  std::istringstream head(line);
  std::string tag;
  std::size_t n = 0;
  if (!(head >> tag >> n) || tag != "n_leaves") {
    throw Error(ErrorKind::MalformedRecord, "expected 'n_leaves <n>' header", 1);
  }
  std::vector<Merge> merges;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Merge m;
    float h = 0.0f;  // heights originate from 32-bit distances
    if (!(ss >> m.left >> m.right >> h)) {
      throw Error(ErrorKind::MalformedRecord, "bad merge on line " + std::to_string(lineno), lineno);
    }
    m.height = h;
    merges.push_back(m);
  }
  return Dendrogram(n, std::move(merges));
}

}  // namespace okgc
