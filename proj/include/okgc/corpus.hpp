#pragma once

// Benchmark corpus: JSONL loading, dev/test split and gold clusterings.
//
// One JSON object per line:
//   {"tokens": [...],
//    "h": {"name": "...", "pos": [start, end], "id": "Q..", "instance": ["Q.."]},
//    "r": {"name": "...", "pos": [start, end], "id": "P.."},
//    "t": {"name": "...", "pos": [start, end], "id": "Q..", "instance": [...]}}
// `pos` is half-open. Sample ids are record positions in the file.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "okgc/clustering.hpp"
#include "okgc/error.hpp"

namespace okgc {

enum class Slot : std::uint8_t { Subj = 0, Rel = 1, Obj = 2 };
enum class Subtask { NpcE, Rpc, NpcO };

inline std::string_view to_string(Slot s) {
  switch (s) {
    case Slot::Subj: return "subj";
    case Slot::Rel: return "rel";
    case Slot::Obj: return "obj";
  }
  return "?";
}

inline std::string_view to_string(Subtask t) {
  switch (t) {
    case Subtask::NpcE: return "npc-e";
    case Subtask::Rpc: return "rpc";
    case Subtask::NpcO: return "npc-o";
  }
  return "?";
}

inline Slot parse_slot(std::string_view s) {
  if (s == "subj" || s == "h") return Slot::Subj;
  if (s == "rel" || s == "r") return Slot::Rel;
  if (s == "obj" || s == "t") return Slot::Obj;
  throw Error(ErrorKind::InvalidConfig, "unknown slot '" + std::string(s) + "'");
}

inline Subtask parse_subtask(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "npc-e" || lower == "npce") return Subtask::NpcE;
  if (lower == "rpc") return Subtask::Rpc;
  if (lower == "npc-o" || lower == "npco") return Subtask::NpcO;
  throw Error(ErrorKind::InvalidConfig, "unknown subtask '" + std::string(s) + "'");
}

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Mention {
  std::string text;
  Span span;
  std::optional<std::string> entity_id;
  std::optional<std::string> relation_id;
  std::vector<std::string> classes;

  friend bool operator==(const Mention&, const Mention&) = default;
};

struct Sample {
  std::size_t id = 0;
  std::vector<std::string> tokens;
  Mention subj;
  Mention rel;
  Mention obj;

  const Mention& mention(Slot s) const {
    switch (s) {
      case Slot::Subj: return subj;
      case Slot::Rel: return rel;
      case Slot::Obj: return obj;
    }
    return subj;
  }

  std::span<const std::string> phrase_tokens(Slot s) const {
    const Span& sp = mention(s).span;
    return {tokens.data() + sp.start, sp.length()};
  }

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Corpus {
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  const Sample& operator[](std::size_t i) const { return samples[i]; }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct SplitSpec {
  double dev_fraction = 0.2;
  std::uint64_t seed = 42;
  std::vector<Index> dev_ids;
  std::vector<Index> test_ids;

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

namespace detail {

inline std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

inline Mention parse_mention(const nlohmann::json& j, bool noun_phrase,
                             const std::vector<std::string>& tokens, std::size_t line) {
  auto malformed = [line](const std::string& what) {
    return Error(ErrorKind::MalformedRecord, "line " + std::to_string(line) + ": " + what, line);
  };
  if (!j.is_object()) throw malformed("mention is not an object");
  if (!j.contains("name") || !j["name"].is_string()) throw malformed("missing string field 'name'");
  if (!j.contains("pos") || !j["pos"].is_array() || j["pos"].size() != 2 ||
      !j["pos"][0].is_number_integer() || !j["pos"][1].is_number_integer()) {
    throw malformed("field 'pos' must be [start, end]");
  }
  const auto start = j["pos"][0].get<std::int64_t>();
  const auto end = j["pos"][1].get<std::int64_t>();
  if (start < 0 || end <= start || static_cast<std::size_t>(end) > tokens.size()) {
    throw Error(ErrorKind::SpanOutOfRange,
                "line " + std::to_string(line) + ": span [" + std::to_string(start) + "," +
                    std::to_string(end) + ") over " + std::to_string(tokens.size()) + " tokens",
                line);
  }

  Mention m;
  m.text = j["name"].get<std::string>();
  m.span = {static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
  const std::string covered = join_tokens({tokens.data() + m.span.start, m.span.length()});
  if (covered != m.text) {
    throw malformed("name '" + m.text + "' does not match span text '" + covered + "'");
  }

  std::optional<std::string> id;
  if (j.contains("id") && !j["id"].is_null()) {
    if (!j["id"].is_string()) throw malformed("field 'id' must be a string");
    id = j["id"].get<std::string>();
  }
  if (noun_phrase) {
    m.entity_id = std::move(id);
    if (j.contains("instance") && !j["instance"].is_null()) {
      if (!j["instance"].is_array()) throw malformed("field 'instance' must be an array");
      for (const auto& c : j["instance"]) {
        if (!c.is_string()) throw malformed("class ids must be strings");
        m.classes.push_back(c.get<std::string>());
      }
    }
  } else {
    m.relation_id = std::move(id);
  }
  return m;
}

inline nlohmann::json mention_to_json(const Mention& m, bool noun_phrase) {
  nlohmann::json j;
  j["name"] = m.text;
  j["pos"] = {m.span.start, m.span.end};
  const auto& id = noun_phrase ? m.entity_id : m.relation_id;
  j["id"] = id ? nlohmann::json(*id) : nlohmann::json(nullptr);
  if (noun_phrase) j["instance"] = m.classes;
  return j;
}

}  // namespace detail

/// Parses one JSONL record. `line` is used for error reporting only.
inline Sample parse_sample(std::string_view text, std::size_t id, std::size_t line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::MalformedRecord, "line " + std::to_string(line) + ": " + e.what(), line);
  }
  if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array()) {
    throw Error(ErrorKind::MalformedRecord,
                "line " + std::to_string(line) + ": missing array field 'tokens'", line);
  }
  Sample s;
  s.id = id;
  for (const auto& t : j["tokens"]) {
    if (!t.is_string()) {
      throw Error(ErrorKind::MalformedRecord,
                  "line " + std::to_string(line) + ": tokens must be strings", line);
    }
    s.tokens.push_back(t.get<std::string>());
  }
  for (const char* key : {"h", "r", "t"}) {
    if (!j.contains(key)) {
      throw Error(ErrorKind::MalformedRecord,
                  "line " + std::to_string(line) + ": missing field '" + key + "'", line);
    }
  }
  s.subj = detail::parse_mention(j["h"], true, s.tokens, line);
  s.rel = detail::parse_mention(j["r"], false, s.tokens, line);
  s.obj = detail::parse_mention(j["t"], true, s.tokens, line);
  return s;
}

inline Corpus read_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    corpus.samples.push_back(parse_sample(line, corpus.samples.size(), lineno));
  }
  if (corpus.samples.empty()) throw Error(ErrorKind::EmptyCorpus, "corpus has no records");
  return corpus;
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open corpus '" + path + "'");
  return read_corpus(in);
}

inline void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& s : corpus.samples) {
    nlohmann::json j;
    j["tokens"] = s.tokens;
    j["h"] = detail::mention_to_json(s.subj, true);
    j["r"] = detail::mention_to_json(s.rel, false);
    j["t"] = detail::mention_to_json(s.obj, true);
    out << j.dump() << '\n';
  }
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write corpus '" + path + "'");
  write_corpus(corpus, out);
}

/// Sub-corpus holding `ids` in the given order, re-indexed densely from 0.
inline Corpus select(const Corpus& corpus, std::span<const Index> ids) {
  Corpus out;
  out.samples.reserve(ids.size());
  for (Index i : ids) {
    out.samples.push_back(corpus.samples.at(i));
    out.samples.back().id = out.samples.size() - 1;
  }
  return out;
}

/// Seeded uniform shuffle of sample ids; the first round(fraction * N) go to dev.
inline SplitSpec split_corpus(const Corpus& corpus, double dev_fraction, std::uint64_t seed) {
  const std::size_t n = corpus.size();
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "dev fraction must lie in (0, 1)");
  }
  const auto n_dev = static_cast<std::size_t>(std::llround(dev_fraction * static_cast<double>(n)));
  if (n < 2 || n_dev == 0 || n_dev == n) {
    throw Error(ErrorKind::TooSmall, "cannot split " + std::to_string(n) + " samples with fraction " +
                                         std::to_string(dev_fraction));
  }
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SplitSpec spec;
  spec.dev_fraction = dev_fraction;
  spec.seed = seed;
  spec.dev_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_dev));
  spec.test_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(n_dev), order.end());
  std::sort(spec.dev_ids.begin(), spec.dev_ids.end());
  std::sort(spec.test_ids.begin(), spec.test_ids.end());
  return spec;
}

inline nlohmann::json to_json(const SplitSpec& s) {
  return {{"dev_fraction", s.dev_fraction}, {"seed", s.seed}, {"dev_ids", s.dev_ids},
          {"test_ids", s.test_ids}};
}

inline SplitSpec split_from_json(const nlohmann::json& j, std::size_t n) {
  SplitSpec s;
  try {
    s.dev_fraction = j.at("dev_fraction").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.dev_ids = j.at("dev_ids").get<std::vector<Index>>();
    s.test_ids = j.at("test_ids").get<std::vector<Index>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("split: ") + e.what());
  }
  std::vector<char> seen(n, 0);
  for (const auto* ids : {&s.dev_ids, &s.test_ids}) {
    for (Index i : *ids) {
      if (i >= n || seen[i]) {
        throw Error(ErrorKind::InvalidConfig, "split ids are not a partition of the corpus");
      }
      seen[i] = 1;
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw Error(ErrorKind::InvalidConfig, "split does not cover the corpus");
  }
  return s;
}

/// Gold clustering of one slot's occurrences.
///
/// NPC-E and RPC group occurrences by entity or relation id. NPC-O emits one
/// cluster per class id (first-appearance order), then, for every occurrence
/// without classes, its NPC-E cluster.
inline Clustering build_gold(const Corpus& corpus, Subtask subtask, Slot slot) {
  if ((slot == Slot::Rel) != (subtask == Subtask::Rpc)) {
    throw Error(ErrorKind::SlotMismatch, std::string(to_string(subtask)) +
                                             " cannot be evaluated on slot " +
                                             std::string(to_string(slot)));
  }
  const std::size_t n = corpus.size();
  std::vector<std::string> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Mention& m = corpus[i].mention(slot);
    const auto& id = subtask == Subtask::Rpc ? m.relation_id : m.entity_id;
    if (!id) {
      throw Error(ErrorKind::MissingLabel,
                  "sample " + std::to_string(i) + " has no " +
                      (subtask == Subtask::Rpc ? "relation" : "entity") + " id",
                  i);
    }
    keys[i] = *id;
  }
  Clustering by_id = Clustering::from_labels(keys);
  if (subtask != Subtask::NpcO) return by_id;

  std::unordered_map<std::string, std::size_t> class_slot;
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& c : corpus[i].mention(slot).classes) {
      auto [it, inserted] = class_slot.try_emplace(c, clusters.size());
      if (inserted) clusters.emplace_back();
      Cluster& target = clusters[it->second];
      if (target.empty() || target.back() != i) target.push_back(static_cast<Index>(i));
    }
  }
  const auto entity_of = by_id.labels();
  std::vector<char> emitted(by_id.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!corpus[i].mention(slot).classes.empty()) continue;
    const Index e = entity_of[i];
    if (emitted[e]) continue;
    emitted[e] = 1;
    clusters.push_back(by_id[e]);
  }
  return Clustering(std::move(clusters), true, n);
}

inline nlohmann::json to_json(const Clustering& c) {
  return {{"universe", c.universe()}, {"overlapping", c.overlapping()}, {"clusters", c.clusters()}};
}

inline Clustering clustering_from_json(const nlohmann::json& j) {
  try {
    return Clustering(j.at("clusters").get<std::vector<Cluster>>(), j.at("overlapping").get<bool>(),
                      j.at("universe").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidClustering, e.what());
  }
}

}  // namespace okgc
