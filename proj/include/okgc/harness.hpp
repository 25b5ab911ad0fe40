#pragma once

// Experiment driver: threshold grid search on dev, evaluation on test, and
// report rendering.
//
// Dev and test are clustered independently. Each split's rows are
// standardized (when enabled) and clustered on their own, so nothing from
// the test rows reaches the tuned threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "okgc/clustering.hpp"
#include "okgc/corpus.hpp"
#include "okgc/embedding.hpp"
#include "okgc/error.hpp"
#include "okgc/hac.hpp"
#include "okgc/metrics.hpp"

namespace okgc {

struct ThresholdGrid {
  double min = 0.0;
  double max = 2.0;
  double step = 0.01;

  /// min, min + step, ... up to max (inclusive within 1e-9 of a step).
  std::vector<double> points() const {
    if (!(step > 0.0) || min < 0.0 || max > 2.0 || max < min) {
      throw Error(ErrorKind::EmptyGrid, "grid needs 0 <= min <= max <= 2 and step > 0");
    }
    std::vector<double> out;
    const auto count = static_cast<std::size_t>(std::floor((max - min) / step + 1e-9)) + 1;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
      out.push_back(std::round((min + static_cast<double>(k) * step) * 1e9) / 1e9);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Scoring dendrogram cuts

/// Jaccard scores of `gold` against every dendrogram node with height <= tau.
/// Equal to jaccard_scores(gold, overlapping_cut(d, tau)) without
/// materialising the node leaf sets: each gold element climbs its ancestor
/// path while heights stay within tau.
inline JaccardScores score_overlapping_cut(const Dendrogram& d, double tau, const Clustering& gold) {
  const std::size_t n = d.n_leaves();
  if (gold.universe() != n) {
    throw Error(ErrorKind::UniverseMismatch, "gold universe differs from dendrogram leaves");
  }
  if (gold.size() == 0 || n == 0) throw Error(ErrorKind::EmptyClustering, "nothing to score");
  const Clustering g = detail::dedup(gold);
  const std::size_t live = n + d.merges_within(tau);
  const auto parent = d.parents();

  std::vector<std::size_t> leaves(d.n_nodes(), 1);
  for (std::size_t k = 0; k < d.merges().size(); ++k) {
    leaves[n + k] = leaves[d.merges()[k].left] + leaves[d.merges()[k].right];
  }

  std::vector<double> best_node(live, 0.0);
  std::vector<std::size_t> count(live, 0);
  std::vector<std::size_t> touched;
  double g_to_p = 0.0;
  for (const auto& cluster : g.clusters()) {
    for (Index x : cluster) {
      for (std::int64_t node = x; node >= 0 && static_cast<std::size_t>(node) < live; node = parent[node]) {
        if (count[node]++ == 0) touched.push_back(static_cast<std::size_t>(node));
      }
    }
    double best = 0.0;
    for (std::size_t node : touched) {
      const double inter = static_cast<double>(count[node]);
      const double j = inter / (static_cast<double>(cluster.size() + leaves[node]) - inter);
      best = std::max(best, j);
      best_node[node] = std::max(best_node[node], j);
      count[node] = 0;
    }
    touched.clear();
    g_to_p += best;
  }
  double p_to_g = 0.0;
  for (double b : best_node) p_to_g += b;
  return {g_to_p / static_cast<double>(g.size()), p_to_g / static_cast<double>(live)};
}

/// Scores the cut of `d` at tau for a subtask/regime.
inline MetricReport evaluate(const Dendrogram& d, const Clustering& gold, Subtask subtask, Slot slot,
                             Regime regime, double tau, MicroConvention conv = MicroConvention::Paper) {
  if (regime == Regime::Overlapping) {
    if (subtask != Subtask::NpcO) {
      throw Error(ErrorKind::InvalidConfig, "overlapping evaluation only applies to npc-o");
    }
    MetricReport r;
    r.subtask = subtask;
    r.slot = slot;
    r.regime = regime;
    const auto j = score_overlapping_cut(d, tau, gold);
    r.jaccard_g_to_p = j.g_to_p;
    r.jaccard_p_to_g = j.p_to_g;
    r.average = subtask_average(r);
    return r;
  }
  return score(gold, cut(d, tau), subtask, slot, regime, conv);
}

inline Dendrogram cluster_embeddings(const EmbeddingMatrix& e, unsigned threads = 0) {
  return hac_complete(pairwise_distances(e, threads));
}

inline MetricReport evaluate(const EmbeddingMatrix& test_embeddings, const Clustering& test_gold, Subtask subtask,
                             Slot slot, Regime regime, double tau, MicroConvention conv = MicroConvention::Paper) {
  return evaluate(cluster_embeddings(test_embeddings), test_gold, subtask, slot, regime, tau, conv);
}

struct TuneOutcome {
  double tau = 0.0;
  double dev_average = 0.0;
};

/// Grid point with the best subtask average on dev; ties go to the smaller
/// tau. Grid points admitting the same merges share one evaluation.
inline TuneOutcome tune_threshold(const Dendrogram& dev_tree, const Clustering& dev_gold, Subtask subtask,
                                  Slot slot, Regime regime, const ThresholdGrid& grid,
                                  MicroConvention conv = MicroConvention::Paper) {
  const auto points = grid.points();
  if (points.empty()) throw Error(ErrorKind::EmptyGrid, "threshold grid is empty");
  std::optional<TuneOutcome> best;
  std::optional<std::size_t> last_merges;
  double last_score = 0.0;
  for (double tau : points) {
    const std::size_t merges = dev_tree.merges_within(tau);
    if (!last_merges || *last_merges != merges) {
      last_score = evaluate(dev_tree, dev_gold, subtask, slot, regime, tau, conv).average;
      last_merges = merges;
    }
    if (!best || last_score > best->dev_average) best = TuneOutcome{tau, last_score};
  }
  return *best;
}

inline TuneOutcome tune_threshold(const EmbeddingMatrix& dev_embeddings, const Clustering& dev_gold,
                                  Subtask subtask, Slot slot, Regime regime, const ThresholdGrid& grid,
                                  MicroConvention conv = MicroConvention::Paper) {
  if (dev_embeddings.rows == 0) throw Error(ErrorKind::DegenerateInput, "dev set is empty");
  return tune_threshold(cluster_embeddings(dev_embeddings), dev_gold, subtask, slot, regime, grid, conv);
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct CembSource {
  std::string path;
  std::optional<std::string> manifest;  // encoder manifest listing excluded sample ids
};
struct RandomSource {
  std::size_t dim = 300;
};
struct StaticSource {
  std::string table;
};

struct EmbeddingSource {
  std::variant<CembSource, RandomSource, StaticSource> kind;
  std::optional<bool> standardize;  // unset: on for CEMB, off for baselines

  bool stochastic() const { return std::holds_alternative<RandomSource>(kind); }
};

/// CEMB files written by the baseline generators carry {"source": "random"}
/// or {"source": "static"} in their metadata; those are left unstandardized
/// by default, encoder output is standardized.
inline bool default_standardize(const EmbeddingMatrix& e) {
  const auto meta = nlohmann::json::parse(e.meta, nullptr, false);
  if (meta.is_object() && meta.contains("source") && meta["source"].is_string()) {
    const auto src = meta["source"].get<std::string>();
    return src != "random" && src != "static";
  }
  return true;
}

struct Target {
  Subtask subtask;
  Slot slot;

  friend bool operator==(const Target&, const Target&) = default;
};

inline std::vector<Target> all_targets() {
  return {{Subtask::NpcE, Slot::Subj}, {Subtask::NpcE, Slot::Obj}, {Subtask::Rpc, Slot::Rel},
          {Subtask::NpcO, Slot::Subj}, {Subtask::NpcO, Slot::Obj}};
}

/// "npc-e:subj", "rpc" (slot rel implied), "npc-o:obj", ...
inline Target parse_target(const std::string& s) {
  const auto colon = s.find(':');
  const Subtask t = parse_subtask(s.substr(0, colon));
  if (colon == std::string::npos) {
    if (t != Subtask::Rpc) throw Error(ErrorKind::InvalidConfig, "target '" + s + "' needs a slot");
    return {t, Slot::Rel};
  }
  const Slot slot = parse_slot(s.substr(colon + 1));
  if ((slot == Slot::Rel) != (t == Subtask::Rpc)) {
    throw Error(ErrorKind::SlotMismatch, "target '" + s + "' pairs a subtask with the wrong slot");
  }
  return {t, slot};
}

inline std::string to_string(const Target& t) {
  return std::string(to_string(t.subtask)) + ":" + std::string(to_string(t.slot));
}

struct ExperimentConfig {
  std::string corpus;
  double dev_fraction = 0.2;
  std::uint64_t split_seed = 42;
  std::optional<std::string> split_path;
  std::map<Slot, EmbeddingSource> sources;
  std::optional<bool> standardize;  // overrides every source when set
  ThresholdGrid grid;
  std::vector<Target> targets = all_targets();
  MicroConvention micro = MicroConvention::Paper;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  std::uint64_t seed = 42;  // deterministic sources (OOV vectors of static tables)
  std::string method = "HAC";
  std::optional<std::string> out;
  unsigned threads = 0;

  void validate() const {
    grid.points();
    if (corpus.empty()) throw Error(ErrorKind::InvalidConfig, "no corpus given");
    if (targets.empty()) throw Error(ErrorKind::InvalidConfig, "no targets requested");
    for (const auto& t : targets) {
      if (!sources.count(t.slot)) {
        throw Error(ErrorKind::InvalidConfig, "target " + to_string(t) + " has no embedding source for its slot");
      }
    }
    for (const auto& [slot, src] : sources) {
      if (src.stochastic() && seeds.empty()) {
        throw Error(ErrorKind::InvalidConfig, "random embeddings need at least one seed");
      }
    }
  }
};

inline nlohmann::json to_json(const EmbeddingSource& s) {
  nlohmann::json j;
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, CembSource>) {
          j = {{"type", "cemb"}, {"path", k.path}};
          if (k.manifest) j["manifest"] = *k.manifest;
        } else if constexpr (std::is_same_v<K, RandomSource>) {
          j = {{"type", "random"}, {"dim", k.dim}};
        } else {
          j = {{"type", "static"}, {"table", k.table}};
        }
      },
      s.kind);
  if (s.standardize) j["standardize"] = *s.standardize;
  return j;
}

inline EmbeddingSource source_from_json(const nlohmann::json& j) {
  EmbeddingSource s;
  const auto type = j.at("type").get<std::string>();
  if (type == "cemb") {
    CembSource c{j.at("path").get<std::string>(), std::nullopt};
    if (j.contains("manifest")) c.manifest = j["manifest"].get<std::string>();
    s.kind = c;
  } else if (type == "random") {
    s.kind = RandomSource{j.value("dim", std::size_t{300})};
  } else if (type == "static") {
    s.kind = StaticSource{j.at("table").get<std::string>()};
  } else {
    throw Error(ErrorKind::InvalidConfig, "unknown embedding source type '" + type + "'");
  }
  if (j.contains("standardize")) s.standardize = j["standardize"].get<bool>();
  return s;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json sources = nlohmann::json::object();
  for (const auto& [slot, src] : c.sources) sources[std::string(to_string(slot))] = to_json(src);
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : c.targets) targets.push_back(to_string(t));
  nlohmann::json j = {{"corpus", c.corpus},
                      {"split", {{"dev_fraction", c.dev_fraction}, {"seed", c.split_seed}}},
                      {"embeddings", sources},
                      {"grid", {{"min", c.grid.min}, {"max", c.grid.max}, {"step", c.grid.step}}},
                      {"targets", targets},
                      {"micro_convention", to_string(c.micro)},
                      {"seeds", c.seeds},
                      {"seed", c.seed},
                      {"method", c.method}};
  if (c.split_path) j["split"]["path"] = *c.split_path;
  if (c.standardize) j["standardize"] = *c.standardize;
  return j;
}

/// Reads the JSON config accepted by `okgc run --config`. Relative paths are
/// resolved against the config file's directory when `base_dir` is given.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  auto resolve = [&](std::string p) {
    if (base_dir.empty() || p.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (base_dir / p).string();
  };
  try {
    ExperimentConfig c;
    c.corpus = resolve(j.at("corpus").get<std::string>());
    if (j.contains("split")) {
      const auto& s = j["split"];
      c.dev_fraction = s.value("dev_fraction", c.dev_fraction);
      c.split_seed = s.value("seed", c.split_seed);
      if (s.contains("path")) c.split_path = resolve(s["path"].get<std::string>());
    }
    for (const auto& [slot, src] : j.at("embeddings").items()) {
      EmbeddingSource es = source_from_json(src);
      if (auto* cemb = std::get_if<CembSource>(&es.kind)) {
        cemb->path = resolve(cemb->path);
        if (cemb->manifest) cemb->manifest = resolve(*cemb->manifest);
      } else if (auto* st = std::get_if<StaticSource>(&es.kind)) {
        st->table = resolve(st->table);
      }
      c.sources[parse_slot(slot)] = es;
    }
    if (j.contains("standardize")) c.standardize = j["standardize"].get<bool>();
    if (j.contains("grid")) {
      c.grid.min = j["grid"].value("min", c.grid.min);
      c.grid.max = j["grid"].value("max", c.grid.max);
      c.grid.step = j["grid"].value("step", c.grid.step);
    }
    if (j.contains("targets")) {
      c.targets.clear();
      for (const auto& t : j["targets"]) c.targets.push_back(parse_target(t.get<std::string>()));
    }
    if (j.contains("micro_convention")) c.micro = parse_micro_convention(j["micro_convention"].get<std::string>());
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    c.seed = j.value("seed", c.seed);
    c.method = j.value("method", c.method);
    if (j.contains("out")) c.out = resolve(j["out"].get<std::string>());
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
  }
}

inline std::string fingerprint(const ExperimentConfig& c) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << detail::fnv1a(to_json(c).dump());
  return ss.str();
}

// ---------------------------------------------------------------------------
// Running experiments

struct TunedResult {
  Subtask subtask = Subtask::NpcE;
  Slot slot = Slot::Subj;
  Regime regime = Regime::Flat;
  std::optional<std::uint64_t> seed;  // set for stochastic sources
  double best_tau = 0.0;
  double dev_average = 0.0;
  MetricReport test_report;

  friend bool operator==(const TunedResult&, const TunedResult&) = default;
};

/// Tunes and evaluates every regime of one subtask on precomputed trees.
inline std::vector<TunedResult> run_subtask(const Corpus& dev, const Corpus& test, const Dendrogram& dev_tree,
                                            const Dendrogram& test_tree, Subtask subtask, Slot slot,
                                            const ThresholdGrid& grid, MicroConvention conv,
                                            std::optional<std::uint64_t> seed = std::nullopt) {
  const Clustering dev_gold = build_gold(dev, subtask, slot);
  const Clustering test_gold = build_gold(test, subtask, slot);
  std::vector<TunedResult> out;
  const std::vector<Regime> regimes =
      subtask == Subtask::NpcO ? std::vector<Regime>{Regime::Flat, Regime::Overlapping} : std::vector<Regime>{Regime::Flat};
  for (Regime regime : regimes) {
    const auto tuned = tune_threshold(dev_tree, dev_gold, subtask, slot, regime, grid, conv);
    TunedResult r;
    r.subtask = subtask;
    r.slot = slot;
    r.regime = regime;
    r.seed = seed;
    r.best_tau = tuned.tau;
    r.dev_average = tuned.dev_average;
    r.test_report = evaluate(test_tree, test_gold, subtask, slot, regime, tuned.tau, conv);
    out.push_back(std::move(r));
  }
  return out;
}

/// Splits one slot's full-corpus embedding matrix, clusters dev and test
/// separately and runs the requested subtasks.
inline std::vector<TunedResult> run_slot(const Corpus& corpus, const SplitSpec& split, const EmbeddingMatrix& e,
                                         Slot slot, const std::vector<Subtask>& subtasks, bool standardize_rows,
                                         const ThresholdGrid& grid, MicroConvention conv,
                                         std::optional<std::uint64_t> seed = std::nullopt, unsigned threads = 0) {
  if (e.rows != corpus.size()) {
    throw Error(ErrorKind::CountMismatch, "embedding rows (" + std::to_string(e.rows) + ") != corpus size (" +
                                              std::to_string(corpus.size()) + ")");
  }
  auto prepare = [&](const std::vector<Index>& ids) {
    EmbeddingMatrix part = select_rows(e, ids);
    if (standardize_rows) part = standardize(part);
    return cluster_embeddings(part, threads);
  };
  const Dendrogram dev_tree = prepare(split.dev_ids);
  const Dendrogram test_tree = prepare(split.test_ids);
  const Corpus dev = select(corpus, split.dev_ids);
  const Corpus test = select(corpus, split.test_ids);
  std::vector<TunedResult> out;
  for (Subtask t : subtasks) {
    auto part = run_subtask(dev, test, dev_tree, test_tree, t, slot, grid, conv, seed);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

struct Manifest {
  std::size_t n_rows = 0;
  std::vector<Index> excluded_ids;
};

inline Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest '" + path + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    Manifest m;
    m.n_rows = j.at("n_rows").get<std::size_t>();
    m.excluded_ids = j.value("excluded_ids", std::vector<Index>{});
    std::sort(m.excluded_ids.begin(), m.excluded_ids.end());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, "manifest '" + path + "': " + e.what());
  }
}

namespace detail {

/// Error with the failing pipeline stage prefixed to the message.
inline Error staged(const std::string& stage, const Error& e) {
  return Error(e.kind(), "[" + stage + "] " + std::string(e.what()), e.where());
}

template <typename F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw staged(stage, e);
  }
}

}  // namespace detail

/// Runs every configured target. Random sources repeat once per seed; each
/// NPC-O target yields a flat and an overlapping result.
inline std::vector<TunedResult> run_experiment(const ExperimentConfig& cfg) {
  detail::in_stage("config", [&] { cfg.validate(); return 0; });
  const Corpus full = detail::in_stage("load", [&] { return load_corpus(cfg.corpus); });

  // Samples an encoder could not align are dropped everywhere.
  std::vector<char> excluded(full.size(), 0);
  std::map<Slot, Manifest> manifests;
  for (const auto& [slot, src] : cfg.sources) {
    if (const auto* c = std::get_if<CembSource>(&src.kind); c && c->manifest) {
      Manifest m = detail::in_stage("embed", [&] { return load_manifest(*c->manifest); });
      for (Index i : m.excluded_ids) {
        if (i >= full.size()) throw Error(ErrorKind::InvalidConfig, "[embed] manifest excludes unknown sample");
        excluded[i] = 1;
      }
      manifests[slot] = std::move(m);
    }
  }
  std::vector<Index> kept;
  for (Index i = 0; i < full.size(); ++i) {
    if (!excluded[i]) kept.push_back(i);
  }
  const Corpus corpus = select(full, kept);

  const SplitSpec split = detail::in_stage("split", [&] {
    if (cfg.split_path) {
      std::ifstream in(*cfg.split_path);
      if (!in) throw Error(ErrorKind::Io, "cannot open split '" + *cfg.split_path + "'");
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("split: ") + e.what());
      }
      return split_from_json(j, corpus.size());
    }
    return split_corpus(corpus, cfg.dev_fraction, cfg.split_seed);
  });

  std::vector<TunedResult> results;
  for (Slot slot : {Slot::Subj, Slot::Rel, Slot::Obj}) {
    std::vector<Subtask> subtasks;
    for (const auto& t : cfg.targets) {
      if (t.slot == slot && std::find(subtasks.begin(), subtasks.end(), t.subtask) == subtasks.end()) {
        subtasks.push_back(t.subtask);
      }
    }
    if (subtasks.empty()) continue;
    const EmbeddingSource& src = cfg.sources.at(slot);

    auto materialize = [&](std::uint64_t seed) -> EmbeddingMatrix {
      return detail::in_stage("embed", [&]() -> EmbeddingMatrix {
        if (const auto* c = std::get_if<CembSource>(&src.kind)) {
          const auto it = manifests.find(slot);
          if (it == manifests.end()) return select_rows(read_embeddings(c->path, full.size()), kept);
          // Rows cover only the samples this encoder kept, in corpus order.
          const Manifest& m = it->second;
          EmbeddingMatrix e = read_embeddings(c->path, m.n_rows);
          std::vector<char> own(full.size(), 0);
          for (Index i : m.excluded_ids) own[i] = 1;
          std::vector<Index> rows;
          Index row = 0;
          for (Index i = 0; i < full.size(); ++i) {
            if (own[i]) continue;
            if (!excluded[i]) rows.push_back(row);
            ++row;
          }
          if (row != e.rows) throw Error(ErrorKind::CountMismatch, "manifest and embedding rows disagree");
          return select_rows(e, rows);
        }
        if (const auto* r = std::get_if<RandomSource>(&src.kind)) return random_embeddings(corpus, slot, r->dim, seed);
        const auto& st = std::get<StaticSource>(src.kind);
        return compose_static(corpus, slot, load_word_vectors(st.table), seed);
      });
    };

    const std::vector<std::optional<std::uint64_t>> seeds = [&] {
      std::vector<std::optional<std::uint64_t>> s;
      if (src.stochastic()) {
        for (auto v : cfg.seeds) s.emplace_back(v);
      } else {
        s.emplace_back(std::nullopt);
      }
      return s;
    }();
    for (const auto& seed : seeds) {
      const EmbeddingMatrix e = materialize(seed.value_or(cfg.seed));
      const bool standardize = cfg.standardize.value_or(src.standardize.value_or(
          std::holds_alternative<CembSource>(src.kind) && default_standardize(e)));
      auto part = detail::in_stage("cluster", [&] {
        return run_slot(corpus, split, e, slot, subtasks, standardize, cfg.grid, cfg.micro, seed, cfg.threads);
      });
      results.insert(results.end(), part.begin(), part.end());
    }
  }

  // Restore the requested target order.
  std::vector<TunedResult> ordered;
  for (const auto& t : cfg.targets) {
    for (const auto& r : results) {
      if (r.subtask == t.subtask && r.slot == t.slot) ordered.push_back(r);
    }
  }
  return ordered;
}

// ---------------------------------------------------------------------------
// Results and reports

inline nlohmann::json to_json(const TunedResult& r) {
  nlohmann::json j = {{"subtask", to_string(r.subtask)},
                      {"slot", to_string(r.slot)},
                      {"regime", to_string(r.regime)},
                      {"best_tau", r.best_tau},
                      {"dev_average", r.dev_average},
                      {"test_report", to_json(r.test_report)}};
  j["seed"] = r.seed ? nlohmann::json(*r.seed) : nlohmann::json(nullptr);
  return j;
}

inline TunedResult result_from_json(const nlohmann::json& j) {
  try {
    TunedResult r;
    r.subtask = parse_subtask(j.at("subtask").get<std::string>());
    r.slot = parse_slot(j.at("slot").get<std::string>());
    r.regime = j.at("regime").get<std::string>() == "overlapping" ? Regime::Overlapping : Regime::Flat;
    if (j.contains("seed") && !j["seed"].is_null()) r.seed = j["seed"].get<std::uint64_t>();
    r.best_tau = j.at("best_tau").get<double>();
    r.dev_average = j.at("dev_average").get<double>();
    r.test_report = report_from_json(j.at("test_report"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MissingField, std::string("result: ") + e.what());
  }
}

/// Seed-averaged view of the results for one (subtask, slot, regime).
struct SummaryRow {
  Subtask subtask = Subtask::NpcE;
  Slot slot = Slot::Subj;
  Regime regime = Regime::Flat;
  std::size_t runs = 0;
  double tau = 0.0;
  std::optional<double> macro, micro, pairwise, j_gp, j_pg;
  double average = 0.0;
};

inline std::vector<SummaryRow> summarize_results(const std::vector<TunedResult>& results) {
  std::vector<SummaryRow> rows;
  auto add = [](std::optional<double>& acc, const auto& v) {
    if (v) acc = acc.value_or(0.0) + v->f1;
  };
  auto add_d = [](std::optional<double>& acc, const std::optional<double>& v) {
    if (v) acc = acc.value_or(0.0) + *v;
  };
  for (const auto& r : results) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& s) {
      return s.subtask == r.subtask && s.slot == r.slot && s.regime == r.regime;
    });
    if (it == rows.end()) {
      SummaryRow row;
      row.subtask = r.subtask;
      row.slot = r.slot;
      row.regime = r.regime;
      rows.push_back(row);
      it = rows.end() - 1;
    }
    ++it->runs;
    it->tau += r.best_tau;
    add(it->macro, r.test_report.macro);
    add(it->micro, r.test_report.micro);
    add(it->pairwise, r.test_report.pairwise);
    add_d(it->j_gp, r.test_report.jaccard_g_to_p);
    add_d(it->j_pg, r.test_report.jaccard_p_to_g);
    it->average += r.test_report.average;
  }
  for (auto& s : rows) {
    const double k = static_cast<double>(s.runs);
    for (auto* f : {&s.macro, &s.micro, &s.pairwise, &s.j_gp, &s.j_pg}) {
      if (*f) **f /= k;
    }
    s.tau /= k;
    s.average /= k;
  }
  return rows;
}

namespace detail {

inline std::string target_label(Subtask t, Slot s) {
  switch (t) {
    case Subtask::NpcE: return std::string("NPC-E ") + std::string(to_string(s));
    case Subtask::Rpc: return "RPC";
    case Subtask::NpcO: return std::string("NPC-O ") + std::string(to_string(s));
  }
  return "?";
}

inline std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

inline std::string pct(const std::optional<double>& v) { return v ? fixed(100.0 * *v, 2) : "-"; }

}  // namespace detail

inline std::string render_tsv(const std::vector<TunedResult>& results, const std::string& fp) {
  std::ostringstream out;
  out << "# config " << fp << '\n';
  out << "target\tslot\tregime\tseed\ttau\tdev_avg\tMa\tMi\tPair\tJ_gp\tJ_pg\tAVG\n";
  auto cell = [](const auto& v) -> std::string {
    using V = std::decay_t<decltype(v)>;
    if constexpr (std::is_same_v<V, std::optional<PRF>>) {
      return v ? detail::fixed(v->f1, 6) : "-";
    } else {
      return v ? detail::fixed(*v, 6) : "-";
    }
  };
  for (const auto& r : results) {
    const auto& m = r.test_report;
    out << to_string(r.subtask) << '\t' << to_string(r.slot) << '\t' << to_string(r.regime) << '\t'
        << (r.seed ? std::to_string(*r.seed) : "-") << '\t' << detail::fixed(r.best_tau, 4) << '\t'
        << detail::fixed(r.dev_average, 6) << '\t' << cell(m.macro) << '\t' << cell(m.micro) << '\t'
        << cell(m.pairwise) << '\t' << cell(m.jaccard_g_to_p) << '\t' << cell(m.jaccard_p_to_g) << '\t'
        << detail::fixed(m.average, 6) << '\n';
  }
  for (const auto& s : summarize_results(results)) {
    if (s.runs < 2) continue;
    auto cell_d = [](const std::optional<double>& v) { return v ? detail::fixed(*v, 6) : std::string("-"); };
    out << to_string(s.subtask) << '\t' << to_string(s.slot) << '\t' << to_string(s.regime) << "\tmean\t"
        << detail::fixed(s.tau, 4) << "\t-\t" << cell_d(s.macro) << '\t' << cell_d(s.micro) << '\t'
        << cell_d(s.pairwise) << '\t' << cell_d(s.j_gp) << '\t' << cell_d(s.j_pg) << '\t'
        << detail::fixed(s.average, 6) << '\n';
  }
  return out.str();
}

/// Markdown with the flat table (Ma, Mi, Pair, AVG) and the Jaccard table
/// (J_gp, J_pg, AVG); scores in percent, seeds averaged.
inline std::string render_markdown(const std::vector<TunedResult>& results, const std::string& fp,
                                   const std::string& method) {
  const auto rows = summarize_results(results);
  std::ostringstream out;
  out << "# " << method << "\n\nConfig fingerprint: `" << fp << "`\n";
  bool flat = false, overlap = false;
  for (const auto& s : rows) (s.regime == Regime::Flat ? flat : overlap) = true;
  if (flat) {
    out << "\n| Target | tau | Ma | Mi | Pair | AVG |\n|---|---:|---:|---:|---:|---:|\n";
    for (const auto& s : rows) {
      if (s.regime != Regime::Flat) continue;
      out << "| " << detail::target_label(s.subtask, s.slot) << " | " << detail::fixed(s.tau, 2) << " | "
          << detail::pct(s.macro) << " | " << detail::pct(s.micro) << " | " << detail::pct(s.pairwise) << " | "
          << detail::pct(s.average) << " |\n";
    }
  }
  if (overlap) {
    out << "\n| Target | tau | J_gp | J_pg | AVG |\n|---|---:|---:|---:|---:|\n";
    for (const auto& s : rows) {
      if (s.regime != Regime::Overlapping) continue;
      out << "| " << detail::target_label(s.subtask, s.slot) << "-Jaccard | " << detail::fixed(s.tau, 2) << " | "
          << detail::pct(s.j_gp) << " | " << detail::pct(s.j_pg) << " | " << detail::pct(s.average) << " |\n";
    }
  }
  return out.str();
}

inline nlohmann::json results_to_json(const std::vector<TunedResult>& results, const std::string& fp,
                                      const nlohmann::json& config = nullptr) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : results) list.push_back(to_json(r));
  nlohmann::json j = {{"fingerprint", fp}, {"results", list}};
  if (!config.is_null()) j["config"] = config;
  return j;
}

inline std::vector<TunedResult> results_from_json(const nlohmann::json& j) {
  std::vector<TunedResult> out;
  for (const auto& r : j.at("results")) out.push_back(result_from_json(r));
  return out;
}

/// Writes report.tsv and report.md into `dir`.
inline void report(const std::vector<TunedResult>& results, const std::filesystem::path& dir,
                   const std::string& fp = "-", const std::string& method = "HAC") {
  if (results.empty()) throw Error(ErrorKind::InvalidConfig, "no results to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create '" + dir.string() + "': " + ec.message());
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + (dir / name).string() + "'");
    out << body;
  };
  write("report.tsv", render_tsv(results, fp));
  write("report.md", render_markdown(results, fp, method));
}

/// run_experiment followed by results.json and the reports in cfg.out.
inline std::vector<TunedResult> run_and_write(const ExperimentConfig& cfg) {
  auto results = run_experiment(cfg);
  if (cfg.out) {
    const std::string fp = fingerprint(cfg);
    detail::in_stage("report", [&] {
      report(results, *cfg.out, fp, cfg.method);
      std::ofstream out(std::filesystem::path(*cfg.out) / "results.json", std::ios::binary);
      if (!out) throw Error(ErrorKind::Io, "cannot write results.json");
      out << results_to_json(results, fp, to_json(cfg)).dump(2) << '\n';
      return 0;
    });
  }
  return results;
}

}  // namespace okgc
