#pragma once

// Clustering scores against gold annotations.
//
// Every score is derived from the intersection sizes |g ∩ p| of gold/pred
// cluster pairs, gathered by walking each gold cluster's elements through
// the predicted memberships. Cost is O(sum over gold elements of the number
// of predicted clusters holding them), so overlapping families stay cheap.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "okgc/clustering.hpp"
#include "okgc/corpus.hpp"
#include "okgc/error.hpp"

namespace okgc {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static PRF from(double p, double r) { return {p, r, p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0}; }
  friend bool operator==(const PRF&, const PRF&) = default;
};

/// Which side the micro sums run over. Paper: precision sums the best
/// overlap of every gold cluster. Cesi: precision sums over predicted
/// clusters (cluster purity).
enum class MicroConvention { Paper, Cesi };

inline MicroConvention parse_micro_convention(std::string_view s) {
  if (s == "paper") return MicroConvention::Paper;
  if (s == "cesi") return MicroConvention::Cesi;
  throw Error(ErrorKind::InvalidConfig, "micro convention must be 'paper' or 'cesi'");
}

inline std::string_view to_string(MicroConvention c) { return c == MicroConvention::Paper ? "paper" : "cesi"; }

/// Flat: a non-overlapping prediction scored with Ma/Mi/Pair.
/// Overlapping: a hierarchy-node prediction scored with the Jaccard pair.
enum class Regime { Flat, Overlapping };

inline std::string_view to_string(Regime r) { return r == Regime::Flat ? "flat" : "overlapping"; }

struct MetricReport {
  Subtask subtask = Subtask::NpcE;
  Slot slot = Slot::Subj;
  Regime regime = Regime::Flat;
  std::optional<PRF> macro;
  std::optional<PRF> micro;  // modified micro for NPC-O
  std::optional<PRF> pairwise;
  std::optional<double> jaccard_g_to_p;
  std::optional<double> jaccard_p_to_g;
  double average = 0.0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

namespace detail {

inline void check_universe(const Clustering& gold, const Clustering& pred) {
  if (gold.universe() != pred.universe()) {
    throw Error(ErrorKind::UniverseMismatch, "gold covers " + std::to_string(gold.universe()) +
                                                 " elements, prediction " + std::to_string(pred.universe()));
  }
}

inline void require_flat(const Clustering& c, std::string_view what) {
  if (c.overlapping()) {
    throw Error(ErrorKind::OverlapNotAllowed, std::string(what) + " must be non-overlapping");
  }
}

/// Best intersection per cluster on both sides, plus purity/containment
/// counts used by the macro scores.
struct OverlapSummary {
  std::vector<std::size_t> best_for_gold;  // max_p |g ∩ p|
  std::vector<std::size_t> best_for_pred;  // max_g |g ∩ p|
  std::vector<double> jaccard_for_gold;    // max_p J(g, p)
  std::vector<double> jaccard_for_pred;    // max_g J(g, p)
  std::size_t pred_contained = 0;          // p ⊆ some g
  std::size_t gold_contained = 0;          // g ⊆ some p
  std::size_t gold_mass = 0;               // Σ |g|
  std::size_t pred_mass = 0;               // Σ |p|
};

inline OverlapSummary summarize(const Clustering& gold, const Clustering& pred) {
  OverlapSummary s;
  s.best_for_gold.assign(gold.size(), 0);
  s.best_for_pred.assign(pred.size(), 0);
  s.jaccard_for_gold.assign(gold.size(), 0.0);
  s.jaccard_for_pred.assign(pred.size(), 0.0);
  std::vector<char> pred_is_contained(pred.size(), 0);

  const Memberships pred_of(pred);
  std::vector<std::size_t> count(pred.size(), 0);
  std::vector<Index> touched;
  for (std::size_t g = 0; g < gold.size(); ++g) {
    const std::size_t gsize = gold[g].size();
    s.gold_mass += gsize;
    for (Index x : gold[g]) {
      for (Index p : pred_of.of(x)) {
        if (count[p]++ == 0) touched.push_back(p);
      }
    }
    bool contained = false;
    for (Index p : touched) {
      const std::size_t inter = count[p];
      const std::size_t psize = pred[p].size();
      const double j = static_cast<double>(inter) / static_cast<double>(gsize + psize - inter);
      s.best_for_gold[g] = std::max(s.best_for_gold[g], inter);
      s.best_for_pred[p] = std::max(s.best_for_pred[p], inter);
      s.jaccard_for_gold[g] = std::max(s.jaccard_for_gold[g], j);
      s.jaccard_for_pred[p] = std::max(s.jaccard_for_pred[p], j);
      if (inter == psize) pred_is_contained[p] = 1;
      if (inter == gsize) contained = true;
      count[p] = 0;
    }
    touched.clear();
    if (contained) ++s.gold_contained;
  }
  for (const auto& p : pred.clusters()) s.pred_mass += p.size();
  s.pred_contained = static_cast<std::size_t>(std::count(pred_is_contained.begin(), pred_is_contained.end(), 1));
  return s;
}

inline double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

inline double sum(const std::vector<std::size_t>& v) {
  std::size_t t = 0;
  for (auto x : v) t += x;
  return static_cast<double>(t);
}

inline double pairs(std::size_t k) {
  return k < 2 ? 0.0 : 0.5 * static_cast<double>(k) * static_cast<double>(k - 1);
}

/// Unordered pairs co-clustered in `pred` (flat) and in at least one gold
/// cluster. Elements of a predicted cluster are grouped by their exact gold
/// membership set; pairs inside a group always hit, pairs across two groups
/// hit when the sets intersect.
inline double pairwise_hits(const Clustering& gold, const Clustering& pred) {
  const Memberships gold_of(gold);
  const std::size_t n = gold.universe();
  std::map<std::vector<Index>, Index> signature_id;
  std::vector<std::vector<Index>> signatures;
  std::vector<Index> sig(n);
  for (Index x = 0; x < n; ++x) {
    const auto m = gold_of.of(x);
    std::vector<Index> key(m.begin(), m.end());
    auto [it, inserted] = signature_id.try_emplace(key, static_cast<Index>(signatures.size()));
    if (inserted) signatures.push_back(std::move(key));
    sig[x] = it->second;
  }
  const bool single = !gold.has_shared_elements();

  auto intersects = [&](Index a, Index b) {
    const auto& u = signatures[a];
    const auto& v = signatures[b];
    std::size_t i = 0, j = 0;
    while (i < u.size() && j < v.size()) {
      if (u[i] == v[j]) return true;
      if (u[i] < v[j]) ++i; else ++j;
    }
    return false;
  };

  std::vector<std::size_t> count(signatures.size(), 0);
  std::vector<Index> touched;
  double hits = 0.0;
  for (const auto& p : pred.clusters()) {
    for (Index x : p) {
      if (count[sig[x]]++ == 0) touched.push_back(sig[x]);
    }
    for (std::size_t a = 0; a < touched.size(); ++a) {
      hits += pairs(count[touched[a]]);
      if (single) continue;
      for (std::size_t b = a + 1; b < touched.size(); ++b) {
        if (intersects(touched[a], touched[b])) {
          hits += static_cast<double>(count[touched[a]]) * static_cast<double>(count[touched[b]]);
        }
      }
    }
    for (Index t : touched) count[t] = 0;
    touched.clear();
  }
  return hits;
}

inline PRF micro_from(const OverlapSummary& s, double gold_den, double pred_den, MicroConvention conv) {
  const double over_gold = ratio(sum(s.best_for_gold), gold_den);
  const double over_pred = ratio(sum(s.best_for_pred), pred_den);
  return conv == MicroConvention::Paper ? PRF::from(over_gold, over_pred) : PRF::from(over_pred, over_gold);
}

}  // namespace detail

/// Fraction of predicted clusters contained in a gold cluster (precision)
/// and of gold clusters contained in a predicted cluster (recall).
inline PRF macro_prf(const Clustering& gold, const Clustering& pred) {
  detail::check_universe(gold, pred);
  detail::require_flat(gold, "gold");
  detail::require_flat(pred, "prediction");
  const auto s = detail::summarize(gold, pred);
  return PRF::from(detail::ratio(static_cast<double>(s.pred_contained), static_cast<double>(pred.size())),
                   detail::ratio(static_cast<double>(s.gold_contained), static_cast<double>(gold.size())));
}

/// Macro scores for an overlapping gold (NPC-O with a flat prediction). Same
/// containment definition as macro_prf.
inline PRF macro_prf_overlapping_gold(const Clustering& gold, const Clustering& pred) {
  detail::check_universe(gold, pred);
  detail::require_flat(pred, "prediction");
  const auto s = detail::summarize(gold, pred);
  return PRF::from(detail::ratio(static_cast<double>(s.pred_contained), static_cast<double>(pred.size())),
                   detail::ratio(static_cast<double>(s.gold_contained), static_cast<double>(gold.size())));
}

/// Micro scores over the universe size N.
inline PRF micro_prf(const Clustering& gold, const Clustering& pred,
                     MicroConvention conv = MicroConvention::Paper) {
  detail::check_universe(gold, pred);
  detail::require_flat(gold, "gold");
  detail::require_flat(pred, "prediction");
  const auto s = detail::summarize(gold, pred);
  const double n = static_cast<double>(gold.universe());
  return detail::micro_from(s, n, n, conv);
}

/// Micro scores for an overlapping gold: denominators are the total cluster
/// masses Σ|g| and Σ|p| instead of N.
inline PRF micro_overlapping_prf(const Clustering& gold, const Clustering& pred,
                                 MicroConvention conv = MicroConvention::Paper) {
  detail::check_universe(gold, pred);
  detail::require_flat(pred, "prediction");
  const auto s = detail::summarize(gold, pred);
  return detail::micro_from(s, static_cast<double>(s.gold_mass), static_cast<double>(s.pred_mass), conv);
}

namespace detail {

inline PRF pairwise_impl(const Clustering& gold, const Clustering& pred) {
  const double hits = pairwise_hits(gold, pred);
  double pred_pairs = 0.0, gold_pairs = 0.0;
  for (const auto& p : pred.clusters()) pred_pairs += pairs(p.size());
  for (const auto& g : gold.clusters()) gold_pairs += pairs(g.size());
  return PRF::from(ratio(hits, pred_pairs), ratio(hits, gold_pairs));
}

}  // namespace detail

/// Pair-counting scores: hits are unordered pairs co-clustered in both
/// clusterings; precision divides by Σ C(|p|,2), recall by Σ C(|g|,2).
/// Empty denominators score 0.
inline PRF pairwise_prf(const Clustering& gold, const Clustering& pred) {
  detail::check_universe(gold, pred);
  detail::require_flat(gold, "gold");
  detail::require_flat(pred, "prediction");
  return detail::pairwise_impl(gold, pred);
}

/// Pairwise scores for an overlapping gold. A hit is a pair sharing a
/// predicted cluster and at least one gold cluster, counted once.
inline PRF pairwise_prf_overlapping_gold(const Clustering& gold, const Clustering& pred) {
  detail::check_universe(gold, pred);
  detail::require_flat(pred, "prediction");
  return detail::pairwise_impl(gold, pred);
}

namespace detail {

inline Clustering dedup(const Clustering& c) {
  std::vector<Cluster> clusters = c.clusters();
  std::sort(clusters.begin(), clusters.end());
  clusters.erase(std::unique(clusters.begin(), clusters.end()), clusters.end());
  return Clustering(std::move(clusters), c.overlapping(), c.universe());
}

}  // namespace detail

struct JaccardScores {
  double g_to_p = 0.0;
  double p_to_g = 0.0;
};

/// Mean best-match Jaccard index from gold to prediction and back. Duplicate
/// clusters are removed from both sides first.
inline JaccardScores jaccard_scores(const Clustering& gold, const Clustering& pred) {
  detail::check_universe(gold, pred);
  if (gold.size() == 0 || pred.size() == 0) {
    throw Error(ErrorKind::EmptyClustering, "Jaccard scores need clusters on both sides");
  }
  const Clustering g = detail::dedup(gold);
  const Clustering p = detail::dedup(pred);
  const auto s = detail::summarize(g, p);
  double gp = 0.0, pg = 0.0;
  for (double j : s.jaccard_for_gold) gp += j;
  for (double j : s.jaccard_for_pred) pg += j;
  return {gp / static_cast<double>(g.size()), pg / static_cast<double>(p.size())};
}

/// Mean of the F1 (or Jaccard) scores that apply to the report's subtask.
inline double subtask_average(const MetricReport& r) {
  auto need = [](const auto& field, std::string_view name) {
    if (!field) throw Error(ErrorKind::MissingField, "report lacks " + std::string(name));
    return *field;
  };
  if (r.regime == Regime::Overlapping) {
    if (r.subtask != Subtask::NpcO) {
      throw Error(ErrorKind::MissingField, "overlapping regime only applies to npc-o");
    }
    return (need(r.jaccard_g_to_p, "J_gp") + need(r.jaccard_p_to_g, "J_pg")) / 2.0;
  }
  switch (r.subtask) {
    case Subtask::Rpc:
      return (need(r.micro, "micro").f1 + need(r.pairwise, "pairwise").f1) / 2.0;
    case Subtask::NpcE:
    case Subtask::NpcO:
      return (need(r.macro, "macro").f1 + need(r.micro, "micro").f1 + need(r.pairwise, "pairwise").f1) / 3.0;
  }
  return 0.0;
}

/// Scores a prediction the way the subtask/regime pair prescribes.
inline MetricReport score(const Clustering& gold, const Clustering& pred, Subtask subtask, Slot slot,
                          Regime regime, MicroConvention conv = MicroConvention::Paper) {
  MetricReport r;
  r.subtask = subtask;
  r.slot = slot;
  r.regime = regime;
  if (regime == Regime::Overlapping) {
    const auto j = jaccard_scores(gold, pred);
    r.jaccard_g_to_p = j.g_to_p;
    r.jaccard_p_to_g = j.p_to_g;
  } else if (subtask == Subtask::NpcO) {
    r.macro = macro_prf_overlapping_gold(gold, pred);
    r.micro = micro_overlapping_prf(gold, pred, conv);
    r.pairwise = pairwise_prf_overlapping_gold(gold, pred);
  } else {
    if (subtask == Subtask::NpcE) r.macro = macro_prf(gold, pred);
    r.micro = micro_prf(gold, pred, conv);
    r.pairwise = pairwise_prf(gold, pred);
  }
  r.average = subtask_average(r);
  return r;
}

inline nlohmann::json to_json(const PRF& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j = {{"subtask", to_string(r.subtask)},
                      {"slot", to_string(r.slot)},
                      {"regime", to_string(r.regime)},
                      {"average", r.average}};
  if (r.macro) j["macro"] = to_json(*r.macro);
  if (r.micro) j["micro"] = to_json(*r.micro);
  if (r.pairwise) j["pairwise"] = to_json(*r.pairwise);
  if (r.jaccard_g_to_p) j["jaccard_g_to_p"] = *r.jaccard_g_to_p;
  if (r.jaccard_p_to_g) j["jaccard_p_to_g"] = *r.jaccard_p_to_g;
  return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
  auto prf = [](const nlohmann::json& o) {
    return PRF{o.at("precision").get<double>(), o.at("recall").get<double>(), o.at("f1").get<double>()};
  };
  try {
    MetricReport r;
    r.subtask = parse_subtask(j.at("subtask").get<std::string>());
    r.slot = parse_slot(j.at("slot").get<std::string>());
    r.regime = j.at("regime").get<std::string>() == "overlapping" ? Regime::Overlapping : Regime::Flat;
    r.average = j.at("average").get<double>();
    if (j.contains("macro")) r.macro = prf(j["macro"]);
    if (j.contains("micro")) r.micro = prf(j["micro"]);
    if (j.contains("pairwise")) r.pairwise = prf(j["pairwise"]);
    if (j.contains("jaccard_g_to_p")) r.jaccard_g_to_p = j["jaccard_g_to_p"].get<double>();
    if (j.contains("jaccard_p_to_g")) r.jaccard_p_to_g = j["jaccard_p_to_g"].get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MissingField, std::string("metric report: ") + e.what());
  }
}

}  // namespace okgc
