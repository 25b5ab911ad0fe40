#include <algorithm>
#include <random>
#include <sstream>

#include "oracle/brute_force.hpp"
#include "test_util.hpp"

namespace okgc {
namespace {

DistanceMatrix four_points() {
  DistanceMatrix d(4);
  d.at(0, 1) = 0.1f;
  d.at(2, 3) = 0.2f;
  d.at(0, 2) = 0.9f;
  d.at(0, 3) = 0.95f;
  d.at(1, 2) = 0.85f;
  d.at(1, 3) = 0.9f;
  return d;
}

// Max pairwise distance inside every cluster of `c`.
void expect_diameters_within(const Clustering& c, const DistanceMatrix& d, double tau) {
  for (const auto& cl : c.clusters()) {
    for (std::size_t a = 0; a < cl.size(); ++a) {
      for (std::size_t b = a + 1; b < cl.size(); ++b) EXPECT_LE(d(cl[a], cl[b]), tau);
    }
  }
}

void expect_monotone(const Dendrogram& d) {
  for (std::size_t k = 1; k < d.merges().size(); ++k) {
    EXPECT_LE(d.merges()[k - 1].height, d.merges()[k].height);
  }
}

TEST(Hac, SingleItem) {
  const Dendrogram d = hac_complete(DistanceMatrix(1));
  EXPECT_EQ(d.n_leaves(), 1u);
  EXPECT_TRUE(d.merges().empty());
  EXPECT_EQ(cut(d, 0.0).clusters(), (std::vector<Cluster>{{0}}));
  EXPECT_OKGC_ERROR(hac_complete(DistanceMatrix(0)), ErrorKind::DegenerateInput);
  EXPECT_OKGC_ERROR(hac_complete_nn_chain(DistanceMatrix(0)), ErrorKind::DegenerateInput);
}

TEST(Hac, FourPointExample) {
  const Dendrogram d = hac_complete(four_points());
  EXPECT_EQ(hac_complete_nn_chain(four_points()), d);
  ASSERT_EQ(d.merges().size(), 3u);
  EXPECT_EQ(d.merges()[0], (Merge{0, 1, 0.1f}));
  EXPECT_EQ(d.merges()[1], (Merge{2, 3, 0.2f}));
  EXPECT_EQ(d.merges()[2], (Merge{4, 5, 0.95f}));
  EXPECT_EQ(cut(d, 0.5).clusters(), (std::vector<Cluster>{{0, 1}, {2, 3}}));
  EXPECT_EQ(overlapping_cut(d, 0.5).clusters(), (std::vector<Cluster>{{0}, {1}, {2}, {3}, {0, 1}, {2, 3}}));
  EXPECT_EQ(cut(d, 0.95).size(), 1u);
  EXPECT_EQ(cut(d, 0.0).size(), 4u);
}

TEST(Hac, MatchesNaiveAgglomeration) {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 2 + rng() % 63;
    const auto full = oracle::random_distances(n, rng);
    const auto expected = oracle::naive_complete(full);
    const Dendrogram d = hac_complete(oracle::condensed(full));
    ASSERT_EQ(d.merges().size(), expected.size());
    for (std::size_t k = 0; k < expected.size(); ++k) {
      EXPECT_EQ(d.merges()[k].left, expected[k].left) << "trial " << trial << " merge " << k;
      EXPECT_EQ(d.merges()[k].right, expected[k].right) << "trial " << trial << " merge " << k;
      EXPECT_EQ(d.merges()[k].height, expected[k].height) << "trial " << trial << " merge " << k;
    }
  }
}

TEST(Hac, NnChainMatchesNaiveOnDistinctDistances) {
  std::mt19937_64 rng(4321);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 2 + rng() % 63;
    const auto full = oracle::random_distances(n, rng);
    const DistanceMatrix m = oracle::condensed(full);
    EXPECT_EQ(hac_complete_nn_chain(m), hac_complete(m)) << "trial " << trial;
  }
}

TEST(Hac, TiesFollowSmallestNodePair) {
  std::mt19937_64 rng(77);
  for (int levels : {2, 3, 5, 16}) {
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t n = 1 + rng() % 64;
      const auto full = oracle::random_distances(n, rng, levels);
      const auto expected = oracle::naive_complete(full);
      const Dendrogram d = hac_complete(oracle::condensed(full));
      ASSERT_EQ(d.merges().size(), expected.size());
      for (std::size_t k = 0; k < expected.size(); ++k) {
        EXPECT_EQ(d.merges()[k], (Merge{expected[k].left, expected[k].right, expected[k].height}))
            << "levels " << levels << " trial " << trial << " merge " << k;
      }
    }
  }
}

TEST(Hac, ChainOfEqualDistances) {
  // a-b, b-c, c-d at 1, everything else 3: the smallest pair (a, b) goes first.
  DistanceMatrix d(4);
  d.at(0, 1) = d.at(1, 2) = d.at(2, 3) = 1.0f;
  d.at(0, 2) = d.at(0, 3) = d.at(1, 3) = 3.0f;
  const Dendrogram t = hac_complete(d);
  EXPECT_EQ(t.merges()[0], (Merge{0, 1, 1.0}));
  EXPECT_EQ(t.merges()[1], (Merge{2, 3, 1.0}));
  EXPECT_EQ(t.merges()[2], (Merge{4, 5, 3.0}));
}

TEST(Hac, TiedDistancesKeepInvariants) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    const auto full = oracle::random_distances(n, rng, 4);
    const DistanceMatrix m = oracle::condensed(full);
    for (const Dendrogram& d : {hac_complete(m), hac_complete_nn_chain(m)}) {
      expect_monotone(d);
      for (double tau : {0.25, 0.5, 0.75, 1.0, 1.5, 2.0}) expect_diameters_within(cut(d, tau), m, tau);
      // Each merge height is the complete-linkage distance of its children.
      const auto ov = overlapping_cut(d, 2.0);
      for (std::size_t k = 0; k < d.merges().size(); ++k) {
        const auto& a = ov[d.merges()[k].left];
        const auto& b = ov[d.merges()[k].right];
        double link = 0.0;
        for (Index u : a) for (Index v : b) link = std::max(link, double(m(u, v)));
        EXPECT_EQ(d.merges()[k].height, link);
      }
    }
  }
}

TEST(Hac, CutsAreNestedAndLaminar) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    const DistanceMatrix m = oracle::condensed(oracle::random_distances(n, rng));
    const Dendrogram d = hac_complete(m);
    for (double tau : {0.1, 0.4, 0.8, 1.2}) {
      const Clustering flat = cut(d, tau);
      const Clustering ov = overlapping_cut(d, tau);
      EXPECT_FALSE(flat.overlapping());
      for (const auto& c : flat.clusters()) {
        EXPECT_NE(std::find(ov.clusters().begin(), ov.clusters().end(), c), ov.clusters().end());
      }
      for (const auto& a : ov.clusters()) {
        for (const auto& b : ov.clusters()) {
          const std::size_t i = oracle::inter_size(a, b);
          EXPECT_TRUE(i == 0 || i == a.size() || i == b.size());
        }
      }
      // A coarser threshold only merges clusters.
      const Clustering coarser = cut(d, tau + 0.3);
      for (const auto& c : flat.clusters()) {
        EXPECT_TRUE(std::any_of(coarser.clusters().begin(), coarser.clusters().end(),
                                [&](const Cluster& big) { return oracle::subset(c, big); }));
      }
    }
  }
}

TEST(Hac, ConstOverloadLeavesInputIntact) {
  const DistanceMatrix m = four_points();
  const DistanceMatrix copy = m;
  EXPECT_EQ(hac_complete(m), hac_complete(four_points()));
  EXPECT_EQ(m, copy);
}

TEST(Dendrogram, TextRoundTrip) {
  std::mt19937_64 rng(8);
  const Dendrogram d = hac_complete(oracle::condensed(oracle::random_distances(25, rng)));
  std::stringstream ss;
  write_dendrogram(d, ss);
  EXPECT_EQ(read_dendrogram(ss), d);
}

TEST(Dendrogram, RejectsMalformedInput) {
  std::istringstream bad_header("leaves 3\n");
  EXPECT_OKGC_ERROR(read_dendrogram(bad_header), ErrorKind::MalformedRecord);
  std::istringstream reused("n_leaves 3\n0 1 0.5\n0 2 0.6\n");
  EXPECT_OKGC_ERROR(read_dendrogram(reused), ErrorKind::InvalidClustering);
  std::istringstream descending("n_leaves 3\n0 1 0.5\n2 3 0.4\n");
  EXPECT_OKGC_ERROR(read_dendrogram(descending), ErrorKind::InvalidClustering);
}

TEST(Dendrogram, MergesWithinUsesInclusiveThreshold) {
  const Dendrogram d = hac_complete(four_points());
  EXPECT_EQ(d.merges_within(0.0), 0u);
  EXPECT_EQ(d.merges_within(double(0.1f)), 1u);
  EXPECT_EQ(d.merges_within(0.5), 2u);
  EXPECT_EQ(d.merges_within(2.0), 3u);
}

}  // namespace
}  // namespace okgc
