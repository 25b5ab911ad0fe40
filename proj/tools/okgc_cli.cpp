// okgc: command-line front end for corpus splitting, baseline embeddings,
// complete-linkage clustering, threshold tuning and evaluation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "okgc/okgc.hpp"

namespace {

using okgc::Error;
using okgc::ErrorKind;

struct StageError {
  std::string stage;
  Error error;
};

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageError{name, e};
  } catch (const std::exception& e) {
    throw StageError{name, Error(ErrorKind::Io, e.what())};
  }
}

void write_text(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out << body;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, "'" + path + "': " + e.what());
  }
}

// Options shared by the commands that work on one slot of a split corpus.
struct SliceOptions {
  std::string corpus;
  std::string split;
  double dev_fraction = 0.2;
  std::uint64_t split_seed = 42;
  std::string subtask = "npc-e";
  std::string slot = "subj";
  std::string embeddings;
  bool standardize = false;
  bool no_standardize = false;
  std::string micro = "paper";
  std::string regime = "flat";

  void add_split(CLI::App* cmd) {
    cmd->add_option("--split", split, "split JSON (from `okgc split`)");
    cmd->add_option("--dev-fraction", dev_fraction, "dev fraction when no --split is given");
    cmd->add_option("--split-seed", split_seed, "shuffle seed when no --split is given");
  }
  void add_standardize(CLI::App* cmd) {
    cmd->add_flag("--standardize", standardize, "z-score embedding columns");
    cmd->add_flag("--no-standardize", no_standardize, "keep raw embeddings");
  }

  okgc::SplitSpec load_split(const okgc::Corpus& c) const {
    if (!split.empty()) return okgc::split_from_json(read_json(split), c.size());
    return okgc::split_corpus(c, dev_fraction, split_seed);
  }

  bool standardize_for(const okgc::EmbeddingMatrix& e) const {
    if (standardize) return true;
    if (no_standardize) return false;
    return okgc::default_standardize(e);
  }

  okgc::Regime parsed_regime() const {
    if (regime == "flat") return okgc::Regime::Flat;
    if (regime == "overlapping") return okgc::Regime::Overlapping;
    throw Error(ErrorKind::InvalidConfig, "regime must be 'flat' or 'overlapping'");
  }
};

struct Prepared {
  okgc::Corpus part;
  okgc::Dendrogram tree;
  okgc::Clustering gold;
};

Prepared prepare(const SliceOptions& o, bool dev_part) {
  const auto subtask = stage("config", [&] { return okgc::parse_subtask(o.subtask); });
  const auto slot = stage("config", [&] { return okgc::parse_slot(o.slot); });
  const auto corpus = stage("load", [&] { return okgc::load_corpus(o.corpus); });
  const auto split = stage("split", [&] { return o.load_split(corpus); });
  const auto& ids = dev_part ? split.dev_ids : split.test_ids;
  auto e = stage("embed", [&] { return okgc::select_rows(okgc::read_embeddings(o.embeddings, corpus.size()), ids); });
  if (o.standardize_for(e)) e = stage("embed", [&] { return okgc::standardize(e); });
  Prepared p;
  p.part = okgc::select(corpus, ids);
  p.gold = stage("gold", [&] { return okgc::build_gold(p.part, subtask, slot); });
  p.tree = stage("cluster", [&] { return okgc::cluster_embeddings(e); });
  return p;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidConfig, "bad seed '" + item + "'");
    }
  }
  return out;
}

/// "subj=path.cemb", "rel=random:300", "obj=static:glove.txt"
std::pair<okgc::Slot, okgc::EmbeddingSource> parse_source(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw Error(ErrorKind::InvalidConfig, "--embeddings expects slot=source");
  const okgc::Slot slot = okgc::parse_slot(spec.substr(0, eq));
  const std::string src = spec.substr(eq + 1);
  okgc::EmbeddingSource out;
  if (src.rfind("random", 0) == 0) {
    okgc::RandomSource r;
    if (src.size() > 7 && src[6] == ':') r.dim = std::stoul(src.substr(7));
    out.kind = r;
  } else if (src.rfind("static:", 0) == 0) {
    out.kind = okgc::StaticSource{src.substr(7)};
  } else {
    out.kind = okgc::CembSource{src, std::nullopt};
  }
  return {slot, out};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open knowledge graph canonicalization: clustering and evaluation"};
  app.require_subcommand(1);

  SliceOptions o;
  std::string out;
  std::size_t dim = 300;
  std::uint64_t seed = 42;
  std::string table;
  std::string part = "dev";
  std::optional<double> tau;
  okgc::ThresholdGrid grid;

  // split
  auto* split_cmd = app.add_subcommand("split", "Seeded dev/test split of a corpus");
  split_cmd->add_option("--corpus", o.corpus, "JSONL corpus")->required();
  split_cmd->add_option("--dev-fraction", o.dev_fraction, "fraction of samples in dev");
  split_cmd->add_option("--seed", o.split_seed, "shuffle seed");
  split_cmd->add_option("--out", out, "output JSON (default stdout)");

  // gold
  auto* gold_cmd = app.add_subcommand("gold", "Gold clustering for a subtask and slot");
  gold_cmd->add_option("--corpus", o.corpus, "JSONL corpus")->required();
  gold_cmd->add_option("--subtask", o.subtask, "npc-e | rpc | npc-o")->required();
  gold_cmd->add_option("--slot", o.slot, "subj | rel | obj")->required();
  gold_cmd->add_option("--split", o.split, "restrict to one part of this split");
  gold_cmd->add_option("--part", part, "dev | test (with --split)");
  gold_cmd->add_option("--out", out, "output JSON (default stdout)");

  // embed-rand
  auto* rand_cmd = app.add_subcommand("embed-rand", "Random word-embedding baseline as CEMB");
  rand_cmd->add_option("--corpus", o.corpus, "JSONL corpus")->required();
  rand_cmd->add_option("--slot", o.slot, "subj | rel | obj")->required();
  rand_cmd->add_option("--dim", dim, "embedding dimension");
  rand_cmd->add_option("--seed", seed, "token vector seed");
  rand_cmd->add_option("--out", out, "output CEMB file")->required();

  // embed-static
  auto* static_cmd = app.add_subcommand("embed-static", "Averaged static word vectors as CEMB");
  static_cmd->add_option("--corpus", o.corpus, "JSONL corpus")->required();
  static_cmd->add_option("--slot", o.slot, "subj | rel | obj")->required();
  static_cmd->add_option("--table", table, "word vectors (token v1 ... vD per line)")->required();
  static_cmd->add_option("--seed", seed, "seed for out-of-vocabulary tokens");
  static_cmd->add_option("--out", out, "output CEMB file")->required();

  // cluster
  auto* cluster_cmd = app.add_subcommand("cluster", "Complete-linkage dendrogram of a CEMB file");
  cluster_cmd->add_option("--embeddings", o.embeddings, "CEMB file")->required();
  o.add_standardize(cluster_cmd);
  cluster_cmd->add_option("--corpus", o.corpus, "corpus (needed with --split)");
  cluster_cmd->add_option("--split", o.split, "cluster only one part of this split");
  cluster_cmd->add_option("--part", part, "dev | test (with --split)");
  cluster_cmd->add_option("--tau", tau, "also emit the cut at this threshold");
  cluster_cmd->add_option("--regime", o.regime, "flat | overlapping cut for --tau");
  cluster_cmd->add_option("--clusters", table, "where to write the cut (JSON)");
  cluster_cmd->add_option("--out", out, "dendrogram text file (default stdout)");

  // tune / eval
  auto add_eval_options = [&](CLI::App* cmd) {
    cmd->add_option("--corpus", o.corpus, "JSONL corpus")->required();
    o.add_split(cmd);
    cmd->add_option("--subtask", o.subtask, "npc-e | rpc | npc-o")->required();
    cmd->add_option("--slot", o.slot, "subj | rel | obj")->required();
    cmd->add_option("--embeddings", o.embeddings, "CEMB file for the slot")->required();
    o.add_standardize(cmd);
    cmd->add_option("--regime", o.regime, "flat | overlapping (npc-o only)");
    cmd->add_option("--micro-convention", o.micro, "paper | cesi");
    cmd->add_option("--out", out, "output JSON (default stdout)");
  };
  auto* tune_cmd = app.add_subcommand("tune", "Grid-search the HAC threshold on the dev part");
  add_eval_options(tune_cmd);
  tune_cmd->add_option("--grid-min", grid.min, "smallest threshold");
  tune_cmd->add_option("--grid-max", grid.max, "largest threshold");
  tune_cmd->add_option("--grid-step", grid.step, "threshold step");
  auto* eval_cmd = app.add_subcommand("eval", "Score the test part at a threshold");
  add_eval_options(eval_cmd);
  eval_cmd->add_option("--tau", tau, "distance threshold")->required();

  // run
  auto* run_cmd = app.add_subcommand("run", "Full experiment: tune on dev, evaluate on test, report");
  std::string config_path;
  std::vector<std::string> sources, subtasks;
  std::string seeds;
  std::string method;
  run_cmd->add_option("--config", config_path, "experiment JSON (flags override it)");
  run_cmd->add_option("--corpus", o.corpus, "JSONL corpus");
  o.add_split(run_cmd);
  run_cmd->add_option("--embeddings", sources, "slot=file.cemb | slot=random[:dim] | slot=static:table");
  run_cmd->add_option("--subtask", subtasks, "targets, e.g. npc-e:subj, rpc, npc-o:obj");
  o.add_standardize(run_cmd);
  run_cmd->add_option("--grid-min", grid.min, "smallest threshold");
  run_cmd->add_option("--grid-max", grid.max, "largest threshold");
  run_cmd->add_option("--grid-step", grid.step, "threshold step");
  run_cmd->add_option("--micro-convention", o.micro, "paper | cesi");
  run_cmd->add_option("--seeds", seeds, "comma-separated seeds for random embeddings");
  run_cmd->add_option("--method", method, "label used in the report");
  run_cmd->add_option("--out", out, "output directory");

  // report
  auto* report_cmd = app.add_subcommand("report", "Render TSV and Markdown tables from results.json");
  std::string results_path;
  report_cmd->add_option("--results", results_path, "results.json from `okgc run`")->required();
  report_cmd->add_option("--method", method, "label used in the report");
  report_cmd->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*split_cmd) {
      const auto corpus = stage("load", [&] { return okgc::load_corpus(o.corpus); });
      const auto spec = stage("split", [&] { return okgc::split_corpus(corpus, o.dev_fraction, o.split_seed); });
      stage("split", [&] { write_text(out, okgc::to_json(spec).dump() + "\n"); return 0; });
    } else if (*gold_cmd) {
      auto corpus = stage("load", [&] { return okgc::load_corpus(o.corpus); });
      if (!o.split.empty()) {
        const auto spec = stage("split", [&] { return o.load_split(corpus); });
        corpus = okgc::select(corpus, part == "test" ? spec.test_ids : spec.dev_ids);
      }
      const auto gold = stage("gold", [&] {
        return okgc::build_gold(corpus, okgc::parse_subtask(o.subtask), okgc::parse_slot(o.slot));
      });
      stage("gold", [&] { write_text(out, okgc::to_json(gold).dump() + "\n"); return 0; });
    } else if (*rand_cmd || *static_cmd) {
      const auto corpus = stage("load", [&] { return okgc::load_corpus(o.corpus); });
      const auto slot = stage("config", [&] { return okgc::parse_slot(o.slot); });
      const auto e = stage("embed", [&] {
        if (*rand_cmd) return okgc::random_embeddings(corpus, slot, dim, seed);
        return okgc::compose_static(corpus, slot, okgc::load_word_vectors(table), seed);
      });
      stage("embed", [&] { okgc::write_embeddings(e, out); return 0; });
    } else if (*cluster_cmd) {
      auto e = stage("embed", [&] { return okgc::read_embeddings(o.embeddings); });
      if (!o.split.empty()) {
        const auto corpus = stage("load", [&] { return okgc::load_corpus(o.corpus); });
        if (e.rows != corpus.size()) {
          throw StageError{"embed", Error(ErrorKind::CountMismatch, "embedding rows do not match the corpus")};
        }
        const auto spec = stage("split", [&] { return o.load_split(corpus); });
        e = okgc::select_rows(e, part == "test" ? spec.test_ids : spec.dev_ids);
      }
      if (o.standardize_for(e)) e = stage("embed", [&] { return okgc::standardize(e); });
      const auto tree = stage("cluster", [&] { return okgc::cluster_embeddings(e); });
      stage("cluster", [&] {
        std::ostringstream ss;
        okgc::write_dendrogram(tree, ss);
        write_text(out, ss.str());
        if (tau) {
          const auto c = o.parsed_regime() == okgc::Regime::Flat ? okgc::cut(tree, *tau)
                                                                 : okgc::overlapping_cut(tree, *tau);
          write_text(table.empty() ? "-" : table, okgc::to_json(c).dump() + "\n");
        }
        return 0;
      });
    } else if (*tune_cmd) {
      const auto conv = stage("config", [&] { return okgc::parse_micro_convention(o.micro); });
      const auto regime = stage("config", [&] { return o.parsed_regime(); });
      const auto p = prepare(o, true);
      const auto tuned = stage("tune", [&] {
        return okgc::tune_threshold(p.tree, p.gold, okgc::parse_subtask(o.subtask), okgc::parse_slot(o.slot),
                                    regime, grid, conv);
      });
      nlohmann::json j = {{"tau", tuned.tau}, {"dev_average", tuned.dev_average}};
      stage("tune", [&] { write_text(out, j.dump() + "\n"); return 0; });
    } else if (*eval_cmd) {
      const auto conv = stage("config", [&] { return okgc::parse_micro_convention(o.micro); });
      const auto regime = stage("config", [&] { return o.parsed_regime(); });
      const auto p = prepare(o, false);
      const auto r = stage("eval", [&] {
        return okgc::evaluate(p.tree, p.gold, okgc::parse_subtask(o.subtask), okgc::parse_slot(o.slot), regime,
                              *tau, conv);
      });
      stage("eval", [&] { write_text(out, okgc::to_json(r).dump(2) + "\n"); return 0; });
    } else if (*run_cmd) {
      okgc::ExperimentConfig cfg = stage("config", [&] {
        okgc::ExperimentConfig c;
        if (!config_path.empty()) {
          c = okgc::config_from_json(read_json(config_path), std::filesystem::path(config_path).parent_path());
        }
        if (!o.corpus.empty()) c.corpus = o.corpus;
        if (!o.split.empty()) c.split_path = o.split;
        if (run_cmd->count("--dev-fraction")) c.dev_fraction = o.dev_fraction;
        if (run_cmd->count("--split-seed")) c.split_seed = o.split_seed;
        for (const auto& s : sources) {
          auto [slot, src] = parse_source(s);
          c.sources[slot] = src;
        }
        if (!subtasks.empty()) {
          c.targets.clear();
          for (const auto& t : subtasks) c.targets.push_back(okgc::parse_target(t));
        }
        if (o.standardize) c.standardize = true;
        if (o.no_standardize) c.standardize = false;
        if (run_cmd->count("--grid-min")) c.grid.min = grid.min;
        if (run_cmd->count("--grid-max")) c.grid.max = grid.max;
        if (run_cmd->count("--grid-step")) c.grid.step = grid.step;
        if (run_cmd->count("--micro-convention")) c.micro = okgc::parse_micro_convention(o.micro);
        if (!seeds.empty()) c.seeds = parse_seeds(seeds);
        if (!method.empty()) c.method = method;
        if (!out.empty()) c.out = out;
        if (!c.out) throw Error(ErrorKind::InvalidConfig, "run needs --out (or \"out\" in the config)");
        c.validate();
        return c;
      });
      try {
        okgc::run_and_write(cfg);
      } catch (const Error& e) {
        throw StageError{"run", e};
      }
      std::cout << "wrote results to " << *cfg.out << '\n';
    } else if (*report_cmd) {
      const auto j = stage("report", [&] { return read_json(results_path); });
      const auto results = stage("report", [&] { return okgc::results_from_json(j); });
      const std::string fp = j.value("fingerprint", std::string("-"));
      if (method.empty()) method = j.contains("config") ? j["config"].value("method", "HAC") : "HAC";
      stage("report", [&] { okgc::report(results, out, fp, method); return 0; });
    }
  } catch (const StageError& e) {
    std::cerr << "okgc: error [" << e.stage << "]: " << e.error.what() << '\n';
    return 1;
  }
  return 0;
}
