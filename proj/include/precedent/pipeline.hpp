#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "precedent/analysis.hpp"
#include "precedent/citegraph.hpp"
#include "precedent/corpus_io.hpp"
#include "precedent/encoder.hpp"
#include "precedent/filter.hpp"
#include "precedent/influence.hpp"
#include "precedent/synth.hpp"
#include "precedent/taxonomy.hpp"
#include "precedent/train.hpp"

namespace precedent {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

inline std::uint64_t parse_hash_hex(const std::string& s) { return std::stoull(s, nullptr, 16); }

/// A stage's output directory. Files are written as `<name>.partial` and only
/// renamed into place by `commit()`, so a failed stage leaves its partial
/// outputs flagged.
class ArtifactDir {
 public:
  explicit ArtifactDir(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }
  fs::path path(const std::string& name) const { return root_ / name; }
  bool exists(const std::string& name) const { return fs::exists(path(name)); }

  std::string read_text(const std::string& name) const {
    std::ifstream in(path(name), std::ios::binary);
    if (!in) throw Error(ErrorCode::kMissingArtifact, "missing artifact " + path(name).string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  ojson read_json(const std::string& name) const {
    try {
      return ojson::parse(read_text(name));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, name + ": " + e.what());
    }
  }

  void write(const std::string& name, const std::string& content) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    const fs::path partial = path(name + ".partial");
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + partial.string());
    out << content;
    out.close();
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + partial.string());
    pending_.push_back(name);
  }

  void write_json(const std::string& name, const ojson& j) { write(name, j.dump(2) + "\n"); }

  std::vector<std::string> commit() {
    for (const auto& name : pending_) fs::rename(path(name + ".partial"), path(name));
    auto done = std::move(pending_);
    pending_.clear();
    return done;
  }

 private:
  fs::path root_;
  std::vector<std::string> pending_;
};

struct StageResult {
  std::string stage;
  std::string config_hash;
  std::vector<std::string> artifacts;
};

namespace detail {

inline std::string stamp_name(const std::string& stage) { return stage + ".stamp.json"; }

/// Hash over the stage name, its parameters and its inputs' hashes. Paths
/// never enter, so identical runs in different directories agree.
inline std::string stage_hash(const std::string& stage, const ojson& params, const ojson& upstream) {
  const ojson key = {{"stage", stage}, {"params", params}, {"upstream", upstream}};
  return hash_hex(fnv1a(key.dump()));
}

inline std::string upstream_hash(const ArtifactDir& dir, const std::string& stage) {
  if (!dir.exists(stamp_name(stage)))
    throw Error(ErrorCode::kMissingArtifact, "stage \"" + stage + "\" has not been run in " + dir.root().string());
  return dir.read_json(stamp_name(stage)).at("config_hash").get<std::string>();
}

inline StageResult finish(ArtifactDir& dir, const std::string& stage, const std::string& hash, const ojson& params,
                          const ojson& upstream) {
  std::vector<std::string> names = dir.commit();
  ojson stamp = {{"stage", stage}, {"config_hash", hash}, {"params", params}, {"upstream", upstream}, {"artifacts", names}};
  dir.write_json(stamp_name(stage), stamp);
  dir.commit();
  names.push_back(stamp_name(stage));
  return {stage, hash, names};
}

inline std::string corpus_text(const Corpus& corpus, const std::string& hash) {
  std::ostringstream out;
  write_corpus(out, corpus, {{"config_hash", hash}});
  return out.str();
}

inline Corpus read_corpus_artifact(const ArtifactDir& dir, const std::string& name) {
  std::istringstream in(dir.read_text(name));
  return read_corpus(in, dir.path(name).string());
}

inline CitationNetwork read_network_artifact(const ArtifactDir& dir, const std::string& name) {
  std::istringstream in(dir.read_text(name));
  return read_network_tsv(in);
}

inline std::string network_text(const CitationNetwork& network) {
  std::ostringstream out;
  write_network_tsv(out, network);
  return out.str();
}

inline std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hash_hex(fnv1a(ss.str()));
}

inline std::string relations_text(const std::vector<PrecedentRelation>& relations) {
  std::ostringstream out;
  write_relations_tsv(out, relations);
  return out.str();
}

inline std::vector<RelationRow> read_relations_artifact(const ArtifactDir& dir, const std::string& name) {
  std::istringstream in(dir.read_text(name));
  return read_relations_tsv(in);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth

inline StageResult stage_synth(ArtifactDir& dir, const SynthConfig& config) {
  const ojson params = to_json(config);
  const std::string hash = detail::stage_hash("synth", params, ojson::object());
  SynthResult r = generate(config);
  dir.write("synth_corpus.jsonl", detail::corpus_text(r.corpus, hash));
  dir.write("ground_truth_relations.tsv", detail::relations_text(r.relations));
  return detail::finish(dir, "synth", hash, params, ojson::object());
}

// ---------------------------------------------------------------------------
// ingest

struct IngestParams {
  std::string input;
  std::optional<std::string> embeddings;
  std::optional<std::string> patterns;
  std::size_t hash_dim = 64;
  std::uint64_t hash_salt = 0;
  bool strict_test_citations = false;
};

inline StageResult stage_ingest(ArtifactDir& dir, const IngestParams& p) {
  if (p.input.empty()) throw Error(ErrorCode::kMissingRequired, "ingest needs --input");
  ojson upstream = {{"input", detail::file_hash(p.input)}};
  if (p.embeddings) upstream["embeddings"] = detail::file_hash(*p.embeddings);
  if (p.patterns) upstream["patterns"] = detail::file_hash(*p.patterns);
  const ojson params = {{"hash_dim", p.hash_dim}, {"hash_salt", p.hash_salt},
                        {"strict_test_citations", p.strict_test_citations}};
  const std::string hash = detail::stage_hash("ingest", params, upstream);

  Corpus corpus = load_corpus(p.input, kCorpusSchema, {p.strict_test_citations});
  const EmbeddingStore store = p.embeddings ? load_embedding_store(*p.embeddings) : EmbeddingStore{};
  corpus = with_embeddings(std::move(corpus), store, {p.hash_dim, p.hash_salt});
  const auto patterns = p.patterns ? load_patterns(*p.patterns) : default_citation_patterns();
  const CitationNetwork network = build_network(corpus, patterns);

  std::ostringstream unresolved;
  unresolved << "citing_id\tbegin\tend\tcase_name\tdocket\treason\n";
  for (const auto& u : network.unresolved)
    unresolved << u.citing_id << '\t' << u.mention.begin << '\t' << u.mention.end << '\t' << u.mention.case_name << '\t'
               << u.mention.docket.value_or("") << '\t' << to_string(u.reason) << '\n';
  ojson dangling = ojson::array();
  for (const auto& [from, to] : network.dangling) dangling.push_back({from, to});

  dir.write("corpus.jsonl", detail::corpus_text(corpus, hash));
  dir.write("network.tsv", detail::network_text(network));
  dir.write("unresolved.tsv", unresolved.str());
  dir.write_json("ingest_report.json", {{"config_hash", hash},
                                        {"cases", corpus.size()},
                                        {"edges", network.edge_count()},
                                        {"unresolved_mentions", network.unresolved.size()},
                                        {"self_citations_dropped", network.self_citations_dropped},
                                        {"dangling_cites", dangling},
                                        {"patterns", patterns_to_json(patterns)}});
  return detail::finish(dir, "ingest", hash, params, upstream);
}

// ---------------------------------------------------------------------------
// filter

inline std::string_view to_string(CitedBy m) { return m == CitedBy::kAnySplit ? "any" : "test"; }

inline CitedBy parse_cited_by(std::string_view s) {
  if (s == "any") return CitedBy::kAnySplit;
  if (s == "test") return CitedBy::kTestOnly;
  throw Error(ErrorCode::kUnknownFlag, "unknown --cited-by \"" + std::string(s) + "\" (valid: any, test)");
}

inline StageResult stage_filter(ArtifactDir& dir, CitedBy mode) {
  const ojson upstream = {{"ingest", detail::upstream_hash(dir, "ingest")}};
  const ojson params = {{"cited_by", to_string(mode)}};
  const std::string hash = detail::stage_hash("filter", params, upstream);
  const Corpus corpus = detail::read_corpus_artifact(dir, "corpus.jsonl");
  const CitationNetwork network = detail::read_network_artifact(dir, "network.tsv");
  const Corpus kept = filter_for_precedent(corpus, network, mode);
  const CitationNetwork kept_network = restrict_network(network, kept);
  dir.write("filtered_corpus.jsonl", detail::corpus_text(kept, hash));
  dir.write("filtered_network.tsv", detail::network_text(kept_network));
  dir.write_json("filter_report.json", {{"config_hash", hash},
                                        {"cited_by", to_string(mode)},
                                        {"train", {{"before", corpus.train.size()}, {"after", kept.train.size()}}},
                                        {"validation", {{"before", corpus.validation.size()}, {"after", kept.validation.size()}}},
                                        {"test", {{"before", corpus.test.size()}, {"after", kept.test.size()}}},
                                        {"edges", {{"before", network.edge_count()}, {"after", kept_network.edge_count()}}}});
  return detail::finish(dir, "filter", hash, params, upstream);
}

// ---------------------------------------------------------------------------
// train

struct TrainParams {
  ModelConfig model;       // d1 and num_articles 0: taken from the corpus
  double threshold = 0.5;  // Simple-head decoding
};

inline std::vector<OutcomeVector> gold_outcomes(const std::vector<Case>& cases) {
  std::vector<OutcomeVector> out;
  out.reserve(cases.size());
  for (const auto& c : cases) out.push_back(c.outcomes);
  return out;
}

inline StageResult stage_train(ArtifactDir& dir, TrainParams p) {
  const ojson upstream = {{"filter", detail::upstream_hash(dir, "filter")}};
  const Corpus corpus = detail::read_corpus_artifact(dir, "filtered_corpus.jsonl");
  if (corpus.train.empty()) throw Error(ErrorCode::kEmptyTrainSplit, "filtered corpus has no training cases");
  const std::size_t dim = corpus.train.front().embedding ? corpus.train.front().embedding->size() : 0;
  if (p.model.d1 == 0) p.model.d1 = dim;
  if (p.model.num_articles == 0) p.model.num_articles = corpus.num_articles;
  if (p.model.num_articles != corpus.num_articles)
    throw Error(ErrorCode::kConflictingValues, "model has " + std::to_string(p.model.num_articles) +
                                                   " articles, corpus has " + std::to_string(corpus.num_articles));
  p.model.validate();
  ojson params = to_json(p.model);
  params["threshold"] = p.threshold;
  const std::string hash = detail::stage_hash("train", params, upstream);

  const TrainResult result = train(corpus, p.model);
  const PredictionSet predictions = predict(result.params, corpus.test, p.threshold);
  const auto gold = gold_outcomes(corpus.test);
  const F1Result micro = f1_score(predictions.decoded(), gold, F1Averaging::kMicro);
  const F1Result macro = f1_score(predictions.decoded(), gold, F1Averaging::kMacro);

  ojson checkpoint = checkpoint_to_json(p.model, result.params);
  checkpoint["config_hash"] = hash;
  std::ostringstream log;
  log << "epoch,train_objective,validation_loss,gradient_norm\n" << std::setprecision(17);
  for (const auto& e : result.log) {
    log << e.epoch << ',' << e.train_objective << ',';
    if (e.validation_loss) log << *e.validation_loss;
    log << ',' << e.gradient_norm << '\n';
  }
  std::ostringstream preds;
  for (const auto& item : predictions.items)
    preds << ojson{{"id", item.id}, {"decoded", format_outcomes(item.decoded)}, {"probabilities", item.probabilities}}.dump()
          << '\n';
  dir.write_json("model.json", checkpoint);
  dir.write("training_log.csv", log.str());
  dir.write("predictions.jsonl", preds.str());
  dir.write_json("train_metrics.json", {{"config_hash", hash},
                                        {"head", to_string(p.model.head)},
                                        {"architecture", to_string(p.model.architecture)},
                                        {"num_params", result.params.size()},
                                        {"epochs_run", result.log.size()},
                                        {"best_epoch", result.best_epoch},
                                        {"stop_reason", result.stop_reason},
                                        {"test_micro_f1", micro.f1},
                                        {"test_macro_f1", macro.f1},
                                        {"test_precision", micro.precision},
                                        {"test_recall", micro.recall},
                                        {"f1_degenerate", micro.degenerate}});
  return detail::finish(dir, "train", hash, params, upstream);
}

inline std::vector<OutcomeVector> read_predictions(const ArtifactDir& dir, const Corpus& corpus) {
  std::istringstream in(dir.read_text("predictions.jsonl"));
  std::map<std::string, OutcomeVector> by_id;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    by_id[j.at("id").get<std::string>()] = parse_outcomes(j.at("decoded").get<std::string>());
  }
  std::vector<OutcomeVector> out;
  for (const auto& c : corpus.test) {
    auto it = by_id.find(c.id);
    if (it == by_id.end()) throw Error(ErrorCode::kMissingPrediction, "no prediction for \"" + c.id + "\"");
    out.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// influence

struct InfluenceParams {
  InverseHvpConfig solver;
  bool write_csv = false;
};

inline ModelParams read_model(const ArtifactDir& dir, ModelConfig* config = nullptr) {
  auto [c, params] = checkpoint_from_json(nlohmann::json::parse(dir.read_text("model.json")));
  if (config) *config = c;
  return params;
}

inline StageResult stage_influence(ArtifactDir& dir, const InfluenceParams& p) {
  const ojson upstream = {{"train", detail::upstream_hash(dir, "train")}};
  ojson params = to_json(p.solver);
  params["write_csv"] = p.write_csv;
  const std::string hash = detail::stage_hash("influence", params, upstream);
  const Corpus corpus = detail::read_corpus_artifact(dir, "filtered_corpus.jsonl");
  ModelConfig config;
  ModelParams model = read_model(dir, &config);
  const NetworkObjective objective(std::move(model), to_dataset(corpus.train, config.d1),
                                   to_dataset(corpus.test, config.d1), config.l2_strength);
  const InfluenceResult result = influence_matrix(objective, p.solver);

  std::ostringstream bin(std::ios::binary);
  write_influence_binary(bin, result.matrix, parse_hash_hex(hash));
  dir.write("influence.bin", bin.str());
  ojson diagnostics = to_json(result.diagnostics);
  diagnostics["config_hash"] = hash;
  diagnostics["n_test"] = result.matrix.n_test;
  diagnostics["n_train"] = result.matrix.n_train;
  diagnostics["sign_convention"] = "iota = -grad L_test^T (H + damping I)^-1 grad L_train; negative = helpful";
  dir.write_json("influence_diagnostics.json", diagnostics);
  if (p.write_csv) {
    std::vector<std::string> test_ids, train_ids;
    for (const auto& c : corpus.test) test_ids.push_back(c.id);
    for (const auto& c : corpus.train) train_ids.push_back(c.id);
    std::ostringstream csv;
    write_influence_csv(csv, result.matrix, test_ids, train_ids);
    dir.write("influence.csv", csv.str());
  }
  return detail::finish(dir, "influence", hash, params, upstream);
}

inline InfluenceMatrix read_influence(const ArtifactDir& dir, const Corpus& corpus) {
  std::istringstream in(dir.read_text("influence.bin"), std::ios::binary);
  LoadedInfluence loaded = read_influence_binary(in);
  if (loaded.matrix.n_test != corpus.test.size() || loaded.matrix.n_train != corpus.train.size())
    throw Error(ErrorCode::kShapeMismatch, "influence matrix does not match the filtered corpus");
  return std::move(loaded.matrix);
}

// ---------------------------------------------------------------------------
// label

inline std::string_view to_string(PerCaseRule r) { return r == PerCaseRule::kExistential ? "existential" : "strict"; }

inline PerCaseRule parse_rule(std::string_view s) {
  if (s == "existential") return PerCaseRule::kExistential;
  if (s == "strict") return PerCaseRule::kStrict;
  throw Error(ErrorCode::kUnknownFlag, "unknown --rule \"" + std::string(s) + "\" (valid: existential, strict)");
}

inline StageResult stage_label(ArtifactDir& dir, PerCaseRule rule) {
  ojson upstream = {{"filter", detail::upstream_hash(dir, "filter")}};
  const bool have_predictions = dir.exists(detail::stamp_name("train")) && dir.exists("predictions.jsonl");
  if (have_predictions) upstream["train"] = detail::upstream_hash(dir, "train");
  const ojson params = {{"rule", to_string(rule)}};
  const std::string hash = detail::stage_hash("label", params, upstream);
  const Corpus corpus = detail::read_corpus_artifact(dir, "filtered_corpus.jsonl");
  const CitationNetwork network = detail::read_network_artifact(dir, "filtered_network.tsv");
  const LabelOptions options{rule};

  std::vector<PrecedentRelation> per_case, per_article, model_based;
  ojson census_json = ojson::object();
  std::ostringstream mixed;
  mixed << "scope\ttest_id\ttrain_id\n";
  for (Scope scope : {Scope::kCited, Scope::kClaimed}) {
    const Labeling lab = label_corpus(corpus, network, scope, Granularity::per_case(), options);
    per_case.insert(per_case.end(), lab.relations.begin(), lab.relations.end());
    ojson counts = ojson::object();
    for (const auto& [kind, n] : census(lab)) counts[std::string(to_string(kind))] = n;
    counts["overall"] = lab.overall.positives();
    counts["mixed_pairs"] = lab.mixed_pairs.size();
    census_json[std::string(to_string(scope))] = counts;
    for (const auto& [t, j] : lab.mixed_pairs)
      mixed << to_string(scope) << '\t' << corpus.test[t].id << '\t' << corpus.train[j].id << '\n';
    for (std::size_t k = 0; k < corpus.num_articles; ++k) {
      const Labeling art = label_corpus(corpus, network, scope, Granularity::per_article(k), options);
      per_article.insert(per_article.end(), art.relations.begin(), art.relations.end());
    }
    if (have_predictions) {
      const Labeling mb = relabel_model_based(corpus, read_predictions(dir, corpus), network, scope,
                                              Granularity::per_case(), options);
      model_based.insert(model_based.end(), mb.relations.begin(), mb.relations.end());
    }
  }
  dir.write("relations.tsv", detail::relations_text(per_case));
  dir.write("relations_per_article.tsv", detail::relations_text(per_article));
  if (have_predictions) dir.write("relations_model.tsv", detail::relations_text(model_based));
  dir.write("mixed_pairs.tsv", mixed.str());
  dir.write_json("labels.json", {{"config_hash", hash},
                                 {"rule", to_string(rule)},
                                 {"n_train", corpus.train.size()},
                                 {"n_test", corpus.test.size()},
                                 {"model_based", have_predictions},
                                 {"census", census_json}});
  return detail::finish(dir, "label", hash, params, upstream);
}

// ---------------------------------------------------------------------------
// correlate

struct CorrelateParams {
  ScoreOrientation orientation = ScoreOrientation::kHelpfulness;
  CorrectnessMode correctness = CorrectnessMode::kExactVector;
};

inline std::string_view to_string(CorrectnessMode m) {
  return m == CorrectnessMode::kExactVector ? "exact-vector" : "per-article";
}

inline CorrectnessMode parse_correctness(std::string_view s) {
  if (s == "exact-vector") return CorrectnessMode::kExactVector;
  if (s == "per-article") return CorrectnessMode::kPerArticle;
  throw Error(ErrorCode::kUnknownFlag, "unknown --correct \"" + std::string(s) + "\" (valid: exact-vector, per-article)");
}

inline StageResult stage_correlate(ArtifactDir& dir, const CorrelateParams& p) {
  ojson upstream = {{"influence", detail::upstream_hash(dir, "influence")}, {"label", detail::upstream_hash(dir, "label")}};
  const ojson params = {{"orientation", to_string(p.orientation)}, {"correctness", to_string(p.correctness)}};
  const std::string hash = detail::stage_hash("correlate", params, upstream);
  const Corpus corpus = detail::read_corpus_artifact(dir, "filtered_corpus.jsonl");
  const InfluenceMatrix matrix = read_influence(dir, corpus);
  const auto rows = detail::read_relations_artifact(dir, "relations.tsv");
  const auto article_rows = detail::read_relations_artifact(dir, "relations_per_article.tsv");
  const bool model_based = dir.exists("relations_model.tsv");
  std::vector<RelationRow> model_rows;
  std::optional<std::vector<OutcomeVector>> predictions;
  if (model_based) {
    model_rows = detail::read_relations_artifact(dir, "relations_model.tsv");
    predictions = read_predictions(dir, corpus);
  }

  std::vector<CorrelationRow> report;
  for (Scope scope : {Scope::kCited, Scope::kClaimed}) {
    const Labeling gold = labeling_from_rows(corpus, rows, scope);
    std::optional<Labeling> model;
    if (model_based) model = labeling_from_rows(corpus, model_rows, scope);
    CorrelationInputs in{&gold, model ? &*model : nullptr, std::nullopt, p.orientation};
    if (predictions) in.correct = correct_mask(*predictions, corpus.test, Granularity::per_case(), p.correctness);
    std::vector<PairFilter> filters = {PairFilter::kAll};
    if (model_based) filters.insert(filters.end(), {PairFilter::kCorrectOnly, PairFilter::kModelBased});
    for (PairFilter f : filters)
      for (const auto& spec : table_specs(scope, Granularity::per_case(), f)) report.push_back(correlate(matrix, spec, in));
  }

  std::vector<CorrelationRow> per_article;
  std::ostringstream csv;
  csv << "article,scope,kind,rho,pairs,positives,skip_reason\n";
  const auto claims = gold_outcomes(corpus.test);
  for (Scope scope : {Scope::kCited, Scope::kClaimed}) {
    for (std::size_t k = 0; k < corpus.num_articles; ++k) {
      const Labeling lab = labeling_from_rows(corpus, article_rows, scope, Granularity::per_article(k));
      std::vector<std::optional<PrecedentKind>> kinds = {std::nullopt};
      for (PrecedentKind kind : kAllKinds) kinds.push_back(kind);
      for (const auto& kind : kinds) {
        CorrelationRow row;
        try {
          row = per_article_correlate(matrix, lab, claims, k, kind, p.orientation);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNoEligiblePairs) throw;
          row.spec = {kind, scope, Granularity::per_article(k), PairFilter::kAll};
          row.skip_reason = e.what();
        }
        char rho[32] = "NA";
        if (row.rho) std::snprintf(rho, sizeof rho, "%.6f", *row.rho);
        csv << k + 1 << ',' << to_string(scope) << ',' << kind_label(kind) << ',' << rho << ',' << row.pairs << ','
            << row.positives << ",\"" << row.skip_reason << "\"\n";
        per_article.push_back(std::move(row));
      }
    }
  }

  ojson rows_json = ojson::array(), article_json = ojson::array();
  for (const auto& r : report) rows_json.push_back(to_json(r));
  for (const auto& r : per_article) article_json.push_back(to_json(r));
  std::ostringstream tsv;
  write_correlation_tsv(tsv, report);
  dir.write_json("correlation_report.json",
                 {{"config_hash", hash},
                  {"orientation", to_string(p.orientation)},
                  {"correctness", to_string(p.correctness)},
                  {"notes",
                   {"scores are ranked as -iota under the helpfulness orientation",
                    "per-article pairs are restricted to test cases claiming the article",
                    "correct-only keeps test cases whose decoded outcome vector matches gold"}},
                  {"rows", rows_json},
                  {"per_article", article_json}});
  dir.write("correlation_report.tsv", tsv.str());
  dir.write("per_article.csv", csv.str());
  return detail::finish(dir, "correlate", hash, params, upstream);
}

// ---------------------------------------------------------------------------
// classify

struct ClassifyParams {
  double lambda = 1e-4;
  ScoreOrientation orientation = ScoreOrientation::kHelpfulness;
};

inline StageResult stage_classify(ArtifactDir& dir, const ClassifyParams& p) {
  const ojson upstream = {{"influence", detail::upstream_hash(dir, "influence")}, {"label", detail::upstream_hash(dir, "label")}};
  const ojson params = {{"lambda", p.lambda}, {"orientation", to_string(p.orientation)}};
  const std::string hash = detail::stage_hash("classify", params, upstream);
  const Corpus corpus = detail::read_corpus_artifact(dir, "filtered_corpus.jsonl");
  const InfluenceMatrix matrix = read_influence(dir, corpus);
  const auto rows = detail::read_relations_artifact(dir, "relations.tsv");
  ojson reports = ojson::object();
  for (Scope scope : {Scope::kCited, Scope::kClaimed}) {
    const Labeling lab = labeling_from_rows(corpus, rows, scope);
    auto [s, c] = flatten(matrix, lab.overall);
    if (p.orientation == ScoreOrientation::kHelpfulness)
      for (double& x : s) x = -x;
    try {
      reports[std::string(to_string(scope))] = to_json(classifier_report(fit_classifier(s, c, p.lambda), s, c));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kSingleClass && e.code() != ErrorCode::kDegenerateF1) throw;
      reports[std::string(to_string(scope))] = {{"skip_reason", e.what()}};
    }
  }
  dir.write_json("classifier_report.json", {{"config_hash", hash},
                                            {"orientation", to_string(p.orientation)},
                                            {"labels", "overall precedent indicator per (train, test) pair"},
                                            {"reports", reports}});
  return detail::finish(dir, "classify", hash, params, upstream);
}

// ---------------------------------------------------------------------------
// report

inline StageResult stage_report(ArtifactDir& dir) {
  const ojson upstream = {{"train", detail::upstream_hash(dir, "train")},
                          {"correlate", detail::upstream_hash(dir, "correlate")},
                          {"classify", detail::upstream_hash(dir, "classify")}};
  const std::string hash = detail::stage_hash("report", ojson::object(), upstream);
  const auto metrics = dir.read_json("train_metrics.json");
  const auto correlations = dir.read_json("correlation_report.json");
  const auto classifier = dir.read_json("classifier_report.json");

  ojson table = ojson::object();
  ojson cells = ojson::array();
  std::ostringstream tsv;
  tsv << "kind\tscope\trho\tpairs\tpositives\tskip_reason\n";
  for (const auto& row : correlations.at("rows")) {
    if (row.at("filter") != "all" || row.at("granularity") != "per-case") continue;
    const std::string scope = row.at("scope");
    const std::string kind = row.at("kind");
    table[scope][kind] = row.at("rho");
    cells.push_back(ojson(row));
    tsv << kind << '\t' << scope << '\t';
    if (row.at("rho").is_null()) {
      tsv << "NA";
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", row.at("rho").get<double>());
      tsv << buf;
    }
    tsv << '\t' << row.at("pairs").get<std::size_t>() << '\t' << row.at("positives").get<std::size_t>() << '\t'
        << row.at("skip_reason").get<std::string>() << '\n';
  }
  ojson variants = ojson::array();
  for (const auto& row : correlations.at("rows"))
    if (row.at("filter") != "all") variants.push_back(ojson(row));

  ojson retrieval = ojson::object();
  for (const auto& [scope, r] : classifier.at("reports").items()) {
    if (r.contains("skip_reason")) {
      retrieval[scope] = r;
      continue;
    }
    retrieval[scope] = {{"f1", r.at("f1")}, {"random", r.at("baseline_f1")}, {"gain", r.at("gain")},
                        {"threshold", r.at("threshold")}};
  }
  dir.write_json("report.json", {{"config_hash", hash},
                                 {"upstream", upstream},
                                 {"model",
                                  {{"head", metrics.at("head")},
                                   {"architecture", metrics.at("architecture")},
                                   {"num_params", metrics.at("num_params")},
                                   {"test_micro_f1", metrics.at("test_micro_f1")}}},
                                 {"orientation", correlations.at("orientation")},
                                 {"correlation_table", table},
                                 {"correlations", cells},
                                 {"filtered_correlations", variants},
                                 {"per_article", correlations.at("per_article")},
                                 {"retrieval", retrieval}});
  dir.write("report.tsv", tsv.str());
  return detail::finish(dir, "report", hash, ojson::object(), upstream);
}

}  // namespace precedent
