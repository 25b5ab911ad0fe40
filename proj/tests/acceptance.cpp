// Acceptance checks. One line per criterion: PASS, FAIL or SKIP, then detail.
// Exit status is non-zero when any line fails.

#include <sys/resource.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "oracle/brute_force.hpp"
#include "synthetic.hpp"

namespace {

using namespace okgc;
using Clock = std::chrono::steady_clock;

struct Outcome {
  enum { Pass, Fail, Skip } status;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {Outcome::Fail, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const char* tag = o.status == Outcome::Pass ? "PASS" : o.status == Outcome::Fail ? "FAIL" : "SKIP";
  if (o.status == Outcome::Fail) ++failures;
  std::printf("%s  %-34s %s (%.2fs)\n", tag, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double peak_rss_mb() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  return static_cast<double>(ru.ru_maxrss) / 1024.0;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Every tree built below is checked here.
std::size_t trees_checked = 0, invariant_violations = 0;

void check_invariants(const Dendrogram& d, const DistanceMatrix& m, const std::vector<double>& taus) {
  ++trees_checked;
  for (std::size_t k = 1; k < d.merges().size(); ++k) {
    if (d.merges()[k - 1].height > d.merges()[k].height) ++invariant_violations;
  }
  for (double tau : taus) {
    const Clustering flat = cut(d, tau);
    for (const auto& cl : flat.clusters()) {
      for (std::size_t a = 0; a < cl.size(); ++a) {
        for (std::size_t b = a + 1; b < cl.size(); ++b) {
          if (m(cl[a], cl[b]) > tau) ++invariant_violations;
        }
      }
    }
  }
}

Outcome metric_oracle() {
  std::mt19937_64 rng(2024);
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t instances = 0;
  auto diff = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int t = 0; t < 400; ++t) {
    const std::size_t n = 1 + rng() % 12;
    const bool overlapping = t % 2 == 1;
    const Clustering g = overlapping ? oracle::random_cover(n, rng) : oracle::random_partition(n, rng);
    const Clustering p = oracle::random_partition(n, rng);
    if (overlapping) {
      const auto ma = macro_prf_overlapping_gold(g, p);
      const auto om = oracle::macro(g, p);
      diff(ma.precision, om.p), diff(ma.recall, om.r), diff(ma.f1, oracle::f1(om));
      const auto mm = micro_overlapping_prf(g, p);
      const auto omm = oracle::micro_overlapping(g, p);
      diff(mm.precision, omm.p), diff(mm.recall, omm.r), diff(mm.f1, oracle::f1(omm));
      const auto pw = pairwise_prf_overlapping_gold(g, p);
      const auto opw = oracle::pairwise(g, p);
      diff(pw.precision, opw.p), diff(pw.recall, opw.r), diff(pw.f1, oracle::f1(opw));
      const Clustering q = oracle::random_cover(n, rng);
      const auto j = jaccard_scores(g, q);
      const auto oj = oracle::jaccard(g, q);
      diff(j.g_to_p, oj.p), diff(j.p_to_g, oj.r);
    } else {
      const auto ma = macro_prf(g, p);
      const auto om = oracle::macro(g, p);
      diff(ma.precision, om.p), diff(ma.recall, om.r), diff(ma.f1, oracle::f1(om));
      const auto mi = micro_prf(g, p);
      const auto omi = oracle::micro(g, p);
      diff(mi.precision, omi.p), diff(mi.recall, omi.r), diff(mi.f1, oracle::f1(omi));
      const auto pw = pairwise_prf(g, p);
      const auto opw = oracle::pairwise(g, p);
      diff(pw.precision, opw.p), diff(pw.recall, opw.r), diff(pw.f1, oracle::f1(opw));
      const auto j = jaccard_scores(g, p);
      const auto oj = oracle::jaccard(g, p);
      diff(j.g_to_p, oj.p), diff(j.p_to_g, oj.r);
    }
    ++instances;
  }
  const double secs = seconds_since(t0);
  const bool ok = instances >= 200 && worst <= 1e-12 && secs < 10.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("%.0f instances, max |diff| %.3g, %.2fs", double(instances), worst, secs)};
}

Outcome perfect_prediction() {
  std::mt19937_64 rng(77);
  std::size_t checked = 0, bad = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng() % 30;
    const Clustering g = oracle::random_partition(n, rng);
    const bool has_pairs =
        std::any_of(g.clusters().begin(), g.clusters().end(), [](const Cluster& c) { return c.size() > 1; });
    auto expect_one = [&](double v) {
      ++checked;
      if (v != 1.0) ++bad;
    };
    for (auto conv : {MicroConvention::Paper, MicroConvention::Cesi}) {
      const auto e = score(g, g, Subtask::NpcE, Slot::Subj, Regime::Flat, conv);
      expect_one(e.macro->precision), expect_one(e.macro->recall), expect_one(e.macro->f1);
      expect_one(e.micro->precision), expect_one(e.micro->recall), expect_one(e.micro->f1);
      if (has_pairs) {
        expect_one(e.pairwise->precision), expect_one(e.pairwise->recall), expect_one(e.pairwise->f1);
        expect_one(e.average);
        expect_one(score(g, g, Subtask::Rpc, Slot::Rel, Regime::Flat, conv).average);
      }
      const auto mm = micro_overlapping_prf(g, g, conv);
      expect_one(mm.precision), expect_one(mm.recall);
    }
    const Clustering o = oracle::random_cover(n, rng);
    const auto j = jaccard_scores(o, o);
    expect_one(j.g_to_p), expect_one(j.p_to_g);
    expect_one(score(o, o, Subtask::NpcO, Slot::Subj, Regime::Overlapping).average);
  }
  return {bad == 0 ? Outcome::Pass : Outcome::Fail,
          fmt("50 golds, %.0f scores checked, %.0f not 1.0", double(checked), double(bad))};
}

// Compares one builder's output with the naive agglomerator.
struct HacTally {
  std::size_t instances = 0, height_mismatch = 0, tree_mismatch = 0;

  void add(const Dendrogram& d, const std::vector<oracle::NaiveMerge>& expected) {
    ++instances;
    std::vector<double> a, b;
    bool same_tree = d.merges().size() == expected.size();
    for (std::size_t k = 0; same_tree && k < expected.size(); ++k) {
      const Merge& x = d.merges()[k];
      same_tree = x.left == expected[k].left && x.right == expected[k].right && x.height == expected[k].height;
    }
    for (const auto& e : expected) a.push_back(e.height);
    for (const auto& x : d.merges()) b.push_back(x.height);
    std::sort(a.begin(), a.end());
    if (a != b) ++height_mismatch;
    if (!same_tree) ++tree_mismatch;
  }
  bool clean() const { return instances >= 100 && height_mismatch == 0 && tree_mismatch == 0; }
};

Outcome hac_oracle() {
  std::mt19937_64 rng(31337);
  const auto t0 = Clock::now();
  HacTally chain, greedy_distinct, greedy_tied;
  for (int t = 0; t < 150; ++t) {
    const std::size_t n = 2 + rng() % 63;
    const auto full = oracle::random_distances(n, rng);
    const DistanceMatrix m = oracle::condensed(full);
    const auto expected = oracle::naive_complete(full);
    const Dendrogram d = hac_complete_nn_chain(m);
    chain.add(d, expected);
    check_invariants(d, m, {0.25, 0.5, 1.0, 1.5});
    const Dendrogram g = hac_complete(m);
    greedy_distinct.add(g, expected);
    check_invariants(g, m, {0.25, 0.5, 1.0, 1.5});
  }
  // Heavily tied distances: only the greedy builder follows the tie rule.
  for (int t = 0; t < 150; ++t) {
    const std::size_t n = 2 + rng() % 63;
    const auto full = oracle::random_distances(n, rng, 2 + t % 8);
    const DistanceMatrix m = oracle::condensed(full);
    const Dendrogram g = hac_complete(m);
    greedy_tied.add(g, oracle::naive_complete(full));
    check_invariants(g, m, {0.25, 0.5, 1.0, 1.5});
    check_invariants(hac_complete_nn_chain(m), m, {0.25, 0.5, 1.0, 1.5});
  }
  const double secs = seconds_since(t0);
  const bool ok = chain.clean() && greedy_distinct.clean() && greedy_tied.clean() && secs < 30.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("nn-chain %.0f distinct-distance instances: %.0f height / %.0f tree mismatches; ", double(chain.instances),
              double(chain.height_mismatch), double(chain.tree_mismatch)) +
              fmt("greedy %.0f distinct + %.0f tied: ", double(greedy_distinct.instances),
                  double(greedy_tied.instances)) +
              fmt("%.0f mismatches; %.2fs",
                  double(greedy_distinct.height_mismatch + greedy_distinct.tree_mismatch +
                         greedy_tied.height_mismatch + greedy_tied.tree_mismatch),
                  secs)};
}

Outcome standardization() {
  std::mt19937_64 rng(5);
  double worst_mean = 0.0, worst_var = 0.0;
  for (int t = 0; t < 5; ++t) {
    EmbeddingMatrix e(1000, 64);
    std::normal_distribution<float> g(static_cast<float>(t) * 3.0f - 4.0f, 0.5f + static_cast<float>(t));
    for (auto& x : e.data) x = g(rng);
    for (std::size_t i = 0; i < e.rows; ++i) e.row(i)[7] = 2.5f;  // constant column
    const auto z = standardize(e);
    for (std::size_t c = 0; c < z.cols; ++c) {
      if (c == 7) continue;
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < z.rows; ++i) mean += z.row(i)[c];
      mean /= double(z.rows);
      for (std::size_t i = 0; i < z.rows; ++i) var += (z.row(i)[c] - mean) * (z.row(i)[c] - mean);
      var /= double(z.rows);
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_var = std::max(worst_var, std::abs(var - 1.0));
    }
  }
  const bool ok = worst_mean < 1e-5 && worst_var < 1e-4;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("5 x 1000x64, max |mean| %.2e, max |var-1| %.2e", worst_mean, worst_var)};
}

Outcome synthetic_end_to_end() {
  const auto t0 = Clock::now();
  const auto b = synthetic::make_blobs(500, 20, 64, 99);
  const auto dir = std::filesystem::temp_directory_path() / "okgc_acceptance_e2e";
  std::filesystem::create_directories(dir);
  save_corpus(b.corpus, (dir / "corpus.jsonl").string());
  for (Slot s : {Slot::Subj, Slot::Obj}) {
    EmbeddingMatrix e = b.embeddings;
    e.slot = s;
    write_embeddings(e, (dir / (std::string(to_string(s)) + ".cemb")).string());
  }
  ExperimentConfig cfg;
  cfg.corpus = (dir / "corpus.jsonl").string();
  cfg.sources[Slot::Subj] = {CembSource{(dir / "subj.cemb").string(), std::nullopt}, std::nullopt};
  cfg.sources[Slot::Obj] = {CembSource{(dir / "obj.cemb").string(), std::nullopt}, std::nullopt};
  cfg.targets = {{Subtask::NpcE, Slot::Subj}, {Subtask::NpcE, Slot::Obj}};
  const auto results = run_experiment(cfg);
  std::filesystem::remove_all(dir);

  // Invariants on the test trees this run produced.
  const SplitSpec split = split_corpus(b.corpus, cfg.dev_fraction, cfg.split_seed);
  const EmbeddingMatrix test = standardize(select_rows(b.embeddings, split.test_ids));
  DistanceMatrix m = pairwise_distances(test);
  check_invariants(hac_complete(m), m, {results[0].best_tau});

  double worst = 1.0;
  for (const auto& r : results) worst = std::min(worst, r.test_report.average);
  const double secs = seconds_since(t0);
  const bool ok = results.size() == 2 && worst >= 0.99 && secs < 60.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("500 samples / 20 blobs, NPC-E test average %.4f (subj) %.4f (obj)", results[0].test_report.average,
              results[1].test_report.average) +
              fmt(", tau %.2f, %.2fs", results[0].best_tau, secs)};
}

Outcome scale() {
  const std::size_t n = 18000, dim = 128;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(18000);
  std::normal_distribution<float> g(0.0f, 1.0f);
  EmbeddingMatrix e(n, dim);
  for (auto& x : e.data) x = g(rng);
  std::uniform_int_distribution<std::size_t> label(0, 1999);
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) l = label(rng);
  const Clustering gold = Clustering::from_labels(labels);

  const auto d0 = Clock::now();
  DistanceMatrix dist = pairwise_distances(standardize(e));
  const double t_dist = seconds_since(d0);
  const auto h0 = Clock::now();
  const Dendrogram tree = hac_complete(DistanceMatrix(dist));
  const double t_hac = seconds_since(h0);
  const auto g0 = Clock::now();
  const auto tuned = tune_threshold(tree, gold, Subtask::NpcE, Slot::Subj, Regime::Flat, ThresholdGrid{});
  const double t_grid = seconds_since(g0);
  check_invariants(tree, dist, {tuned.tau, 0.9});
  const double secs = seconds_since(t0);
  const double rss = peak_rss_mb();
  const bool ok = secs < 600.0 && rss < 4096.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("18000x128: distances %.1fs, HAC %.1fs, ", t_dist, t_hac) +
              fmt("201-point grid %.1fs, total %.1fs, ", t_grid, secs) + fmt("peak RSS %.0f MB", rss)};
}

Outcome invariants() {
  const bool ok = trees_checked > 0 && invariant_violations == 0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("%.0f trees checked, %.0f violations", double(trees_checked), double(invariant_violations))};
}

Outcome benchmark_reproduction() {
  const char* root = std::getenv("OKGC_BENCHMARK");
  if (!root || !std::filesystem::exists(std::filesystem::path(root) / "corpus.jsonl")) {
    return {Outcome::Skip, "benchmark absent (set OKGC_BENCHMARK to a directory holding corpus.jsonl)"};
  }
  ExperimentConfig cfg;
  cfg.corpus = (std::filesystem::path(root) / "corpus.jsonl").string();
  for (Slot s : {Slot::Subj, Slot::Rel, Slot::Obj}) cfg.sources[s] = {RandomSource{300}, std::nullopt};
  cfg.targets = {{Subtask::NpcE, Slot::Subj}, {Subtask::NpcE, Slot::Obj}, {Subtask::Rpc, Slot::Rel}};
  const auto rows = summarize_results(run_experiment(cfg));
  const double expected[] = {85.32, 85.11, 35.98};
  bool ok = rows.size() == 3;
  std::string detail;
  for (std::size_t k = 0; k < rows.size() && k < 3; ++k) {
    const double got = 100.0 * rows[k].average;
    ok = ok && std::abs(got - expected[k]) <= 3.0;
    detail += fmt("%.2f vs %.2f; ", got, expected[k]);
  }
  return {ok ? Outcome::Pass : Outcome::Fail, detail};
}

}  // namespace

int main() {
  report("metric oracle equivalence", metric_oracle);
  report("perfect-prediction identity", perfect_prediction);
  report("HAC oracle equivalence", hac_oracle);
  report("standardization moments", standardization);
  report("synthetic end-to-end", synthetic_end_to_end);
  report("scale target", scale);
  report("complete-linkage invariants", invariants);
  report("Random+HAC reproduction", benchmark_reproduction);
  return failures == 0 ? 0 : 1;
}
