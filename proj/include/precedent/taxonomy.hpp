#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "precedent/citegraph.hpp"
#include "precedent/corpus.hpp"
#include "precedent/error.hpp"

namespace precedent {

enum class PrecedentKind : std::uint8_t {
  kAppliedPositive = 0,
  kAppliedNegative = 1,
  kDistinguishedPositive = 2,
  kDistinguishedNegative = 3,
};

inline constexpr std::array<PrecedentKind, 4> kAllKinds = {
    PrecedentKind::kAppliedPositive, PrecedentKind::kAppliedNegative,
    PrecedentKind::kDistinguishedPositive, PrecedentKind::kDistinguishedNegative};

constexpr std::string_view to_string(PrecedentKind k) {
  switch (k) {
    case PrecedentKind::kAppliedPositive: return "applied-positive";
    case PrecedentKind::kAppliedNegative: return "applied-negative";
    case PrecedentKind::kDistinguishedPositive: return "distinguished-positive";
    case PrecedentKind::kDistinguishedNegative: return "distinguished-negative";
  }
  return "?";
}

inline PrecedentKind parse_kind(std::string_view s) {
  for (PrecedentKind k : kAllKinds)
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::kParse, "unknown precedent kind \"" + std::string(s) + "\"");
}

constexpr bool is_applied(PrecedentKind k) {
  return k == PrecedentKind::kAppliedPositive || k == PrecedentKind::kAppliedNegative;
}

enum class Scope : std::uint8_t { kCited, kClaimed };

constexpr std::string_view to_string(Scope s) { return s == Scope::kCited ? "cited" : "claimed"; }

inline Scope parse_scope(std::string_view s) {
  if (s == "cited") return Scope::kCited;
  if (s == "claimed") return Scope::kClaimed;
  throw Error(ErrorCode::kParse, "unknown scope \"" + std::string(s) + "\" (expected cited|claimed)");
}

/// Per-case aggregation, or a single (0-based) article.
struct Granularity {
  std::optional<std::size_t> article;

  static Granularity per_case() { return {}; }
  static Granularity per_article(std::size_t k) { return {k}; }
  bool is_per_case() const { return !article.has_value(); }
  bool operator==(const Granularity&) const = default;
};

inline std::string to_string(const Granularity& g) {
  return g.is_per_case() ? "per-case" : "per-article(" + std::to_string(*g.article + 1) + ")";
}

/// How a per-case relation is derived from the articles.
enum class PerCaseRule {
  kExistential,  // any article where the rule holds
  kStrict,       // as above, and both cases claim exactly the same articles
};

using KindSet = std::bitset<4>;

inline KindSet kind_bit(PrecedentKind k) { return KindSet{}.set(static_cast<std::size_t>(k)); }

/// Relation of the cited case to the citing case at article `k` (0-based).
inline std::optional<PrecedentKind> relate_per_article(const OutcomeVector& citing, const OutcomeVector& cited,
                                                       std::size_t k) {
  if (k >= citing.size() || k >= cited.size())
    throw Error(ErrorCode::kIndexOutOfRange, "article index " + std::to_string(k) + " outside [0, " +
                                                 std::to_string(std::min(citing.size(), cited.size())) + ")");
  const Outcome a = citing[k];
  const Outcome b = cited[k];
  if (a == Outcome::kNull || b == Outcome::kNull) return std::nullopt;
  if (a == Outcome::kPositive && b == Outcome::kPositive) return PrecedentKind::kAppliedPositive;
  if (a == Outcome::kNegative && b == Outcome::kNegative) return PrecedentKind::kAppliedNegative;
  if (a == Outcome::kNegative && b == Outcome::kPositive) return PrecedentKind::kDistinguishedPositive;
  return PrecedentKind::kDistinguishedNegative;
}

inline KindSet relate_per_case(const OutcomeVector& citing, const OutcomeVector& cited,
                               PerCaseRule rule = PerCaseRule::kExistential) {
  if (citing.size() != cited.size())
    throw Error(ErrorCode::kLengthMismatch, "outcome vectors of length " + std::to_string(citing.size()) + " and " +
                                                std::to_string(cited.size()));
  if (rule == PerCaseRule::kStrict && claimed_articles(citing) != claimed_articles(cited)) return {};
  KindSet kinds;
  for (std::size_t k = 0; k < citing.size(); ++k)
    if (auto kind = relate_per_article(citing, cited, k)) kinds |= kind_bit(*kind);
  return kinds;
}

struct PrecedentRelation {
  std::string train_id;
  std::string test_id;
  std::size_t train_index = 0;
  std::size_t test_index = 0;
  PrecedentKind kind = PrecedentKind::kAppliedPositive;
  Scope scope = Scope::kCited;
  std::vector<std::size_t> articles;  // 0-based, ascending, nonempty

  bool operator==(const PrecedentRelation&) const = default;
};

/// Binary indicators over all (train, test) pairs, flattened as
/// test_index * n_train + train_index.
struct LabelMatrix {
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<std::uint8_t> values;

  std::uint8_t at(std::size_t test_index, std::size_t train_index) const { return values[test_index * n_train + train_index]; }
  std::size_t positives() const {
    std::size_t n = 0;
    for (auto v : values) n += v;
    return n;
  }
};

struct Labeling {
  Scope scope = Scope::kCited;
  Granularity granularity;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<PrecedentRelation> relations;  // ordered by (test, train, kind)
  std::array<LabelMatrix, 4> by_kind;
  LabelMatrix overall;  // 1 iff any kind holds
  // Pairs carrying both an applied and a distinguished kind (possible at
  // case granularity when articles disagree).
  std::vector<std::pair<std::size_t, std::size_t>> mixed_pairs;  // (test_index, train_index)

  const LabelMatrix& matrix(PrecedentKind k) const { return by_kind[static_cast<std::size_t>(k)]; }
};

struct LabelOptions {
  PerCaseRule rule = PerCaseRule::kExistential;
};

namespace detail {

inline bool shares_claim(const OutcomeVector& a, const OutcomeVector& b) {
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a[k] != Outcome::kNull && b[k] != Outcome::kNull) return true;
  return false;
}

inline void add_pair(Labeling& out, const Case& test, std::size_t test_index, const Case& train,
                     std::size_t train_index, const LabelOptions& options) {
  std::array<std::vector<std::size_t>, 4> articles;
  if (out.granularity.is_per_case()) {
    if (options.rule == PerCaseRule::kStrict && claimed_articles(test) != claimed_articles(train)) return;
    if (test.outcomes.size() != train.outcomes.size())
      throw Error(ErrorCode::kLengthMismatch, "cases \"" + test.id + "\" and \"" + train.id + "\" differ in K");
    for (std::size_t k = 0; k < test.outcomes.size(); ++k)
      if (auto kind = relate_per_article(test.outcomes, train.outcomes, k))
        articles[static_cast<std::size_t>(*kind)].push_back(k);
  } else {
    const std::size_t k = *out.granularity.article;
    if (auto kind = relate_per_article(test.outcomes, train.outcomes, k)) articles[static_cast<std::size_t>(*kind)].push_back(k);
  }
  const std::size_t flat = test_index * out.n_train + train_index;
  bool applied = false;
  bool distinguished = false;
  for (PrecedentKind kind : kAllKinds) {
    auto& arts = articles[static_cast<std::size_t>(kind)];
    if (arts.empty()) continue;
    (is_applied(kind) ? applied : distinguished) = true;
    out.by_kind[static_cast<std::size_t>(kind)].values[flat] = 1;
    out.overall.values[flat] = 1;
    out.relations.push_back({train.id, test.id, train_index, test_index, kind, out.scope, std::move(arts)});
  }
  if (applied && distinguished) out.mixed_pairs.emplace_back(test_index, train_index);
}

}  // namespace detail

/// Labels (train, test) pairs. Cited scope uses network edges from a test case
/// to a training case; claimed scope uses every pair sharing a claimed
/// article (for per-article granularity: both claim that article).
inline Labeling label_corpus(const Corpus& corpus, const CitationNetwork& network, Scope scope,
                             Granularity granularity = Granularity::per_case(), const LabelOptions& options = {}) {
  if (scope == Scope::kCited && network.edge_count() == 0)
    throw Error(ErrorCode::kScopeUnavailable, "cited scope requested but the citation network is empty");
  if (granularity.article && *granularity.article >= corpus.num_articles)
    throw Error(ErrorCode::kIndexOutOfRange, "article " + std::to_string(*granularity.article) + " >= K");

  Labeling out;
  out.scope = scope;
  out.granularity = granularity;
  out.n_train = corpus.train.size();
  out.n_test = corpus.test.size();
  const std::size_t m = out.n_train * out.n_test;
  for (auto& matrix : out.by_kind) matrix = {out.n_train, out.n_test, std::vector<std::uint8_t>(m, 0)};
  out.overall = {out.n_train, out.n_test, std::vector<std::uint8_t>(m, 0)};

  std::unordered_map<std::string, std::size_t> train_index;
  for (std::size_t j = 0; j < corpus.train.size(); ++j) train_index.emplace(corpus.train[j].id, j);

  for (std::size_t t = 0; t < corpus.test.size(); ++t) {
    const Case& test = corpus.test[t];
    if (scope == Scope::kCited) {
      auto it = network.edges.find(test.id);
      if (it == network.edges.end()) continue;
      std::vector<std::size_t> cited;
      for (const auto& id : it->second)
        if (auto j = train_index.find(id); j != train_index.end()) cited.push_back(j->second);
      std::sort(cited.begin(), cited.end());
      for (std::size_t j : cited) detail::add_pair(out, test, t, corpus.train[j], j, options);
    } else {
      for (std::size_t j = 0; j < corpus.train.size(); ++j) {
        const Case& train = corpus.train[j];
        if (granularity.article) {
          const std::size_t k = *granularity.article;
          if (test.outcomes[k] == Outcome::kNull || train.outcomes[k] == Outcome::kNull) continue;
        } else if (!detail::shares_claim(test.outcomes, train.outcomes)) {
          continue;
        }
        detail::add_pair(out, test, t, train, j, options);
      }
    }
  }
  return out;
}

/// Same labeling with each test case's outcomes replaced by the model's
/// decoded prediction (aligned with `corpus.test`).
inline Labeling relabel_model_based(const Corpus& corpus, const std::vector<OutcomeVector>& predictions,
                                    const CitationNetwork& network, Scope scope,
                                    Granularity granularity = Granularity::per_case(), const LabelOptions& options = {}) {
  if (predictions.size() != corpus.test.size())
    throw Error(ErrorCode::kMissingPrediction, std::to_string(predictions.size()) + " predictions for " +
                                                   std::to_string(corpus.test.size()) + " test cases");
  Corpus swapped = corpus;
  for (std::size_t t = 0; t < swapped.test.size(); ++t) {
    if (predictions[t].size() != corpus.num_articles)
      throw Error(ErrorCode::kMissingPrediction, "prediction for \"" + corpus.test[t].id + "\" has wrong length");
    swapped.test[t].outcomes = predictions[t];
  }
  return label_corpus(swapped, network, scope, granularity, options);
}

/// Relation counts per kind, the shape of a per-category citation census.
inline std::map<PrecedentKind, std::size_t> census(const Labeling& labeling) {
  std::map<PrecedentKind, std::size_t> out;
  for (PrecedentKind k : kAllKinds) out[k] = 0;
  for (const auto& r : labeling.relations) ++out[r.kind];
  return out;
}

/// TSV rows `train_id, test_id, kind, scope, articles` with 1-based article
/// numbers joined by commas.
inline void write_relations_tsv(std::ostream& out, const std::vector<PrecedentRelation>& relations) {
  for (const auto& r : relations) {
    out << r.train_id << '\t' << r.test_id << '\t' << to_string(r.kind) << '\t' << to_string(r.scope) << '\t';
    for (std::size_t i = 0; i < r.articles.size(); ++i) out << (i ? "," : "") << r.articles[i] + 1;
    out << '\n';
  }
}

struct RelationRow {
  std::string train_id;
  std::string test_id;
  PrecedentKind kind;
  Scope scope;
  std::vector<std::size_t> articles;  // 0-based

  bool operator==(const RelationRow&) const = default;
  auto operator<=>(const RelationRow& o) const {
    return std::tie(test_id, train_id, kind, scope, articles) <=> std::tie(o.test_id, o.train_id, o.kind, o.scope, o.articles);
  }
};

inline RelationRow to_row(const PrecedentRelation& r) { return {r.train_id, r.test_id, r.kind, r.scope, r.articles}; }

inline std::vector<RelationRow> read_relations_tsv(std::istream& in) {
  std::vector<RelationRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 5) throw Error(ErrorCode::kParse, "relations line " + std::to_string(line_no) + ": expected 5 columns");
    RelationRow row{fields[0], fields[1], parse_kind(fields[2]), parse_scope(fields[3]), {}};
    std::stringstream arts(fields[4]);
    while (std::getline(arts, field, ',')) {
      try {
        const auto k = std::stoul(field);
        if (k == 0) throw std::invalid_argument("article numbers are 1-based");
        row.articles.push_back(k - 1);
      } catch (const std::exception& e) {
        throw Error(ErrorCode::kParse, "relations line " + std::to_string(line_no) + ": bad article \"" + field + "\"");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Rebuilds a labeling's matrices from relation rows, using the corpus for
/// index order. Rows naming cases outside the corpus are a schema error.
inline Labeling labeling_from_rows(const Corpus& corpus, const std::vector<RelationRow>& rows, Scope scope,
                                   Granularity granularity = Granularity::per_case()) {
  Labeling out;
  out.scope = scope;
  out.granularity = granularity;
  out.n_train = corpus.train.size();
  out.n_test = corpus.test.size();
  const std::size_t m = out.n_train * out.n_test;
  for (auto& matrix : out.by_kind) matrix = {out.n_train, out.n_test, std::vector<std::uint8_t>(m, 0)};
  out.overall = {out.n_train, out.n_test, std::vector<std::uint8_t>(m, 0)};
  std::unordered_map<std::string, std::size_t> train_index, test_index;
  for (std::size_t j = 0; j < corpus.train.size(); ++j) train_index.emplace(corpus.train[j].id, j);
  for (std::size_t t = 0; t < corpus.test.size(); ++t) test_index.emplace(corpus.test[t].id, t);
  for (const auto& row : rows) {
    if (row.scope != scope) continue;
    if (granularity.article &&
        std::find(row.articles.begin(), row.articles.end(), *granularity.article) == row.articles.end())
      continue;
    auto j = train_index.find(row.train_id);
    auto t = test_index.find(row.test_id);
    if (j == train_index.end() || t == test_index.end())
      throw Error(ErrorCode::kSchema, "relation " + row.train_id + " -> " + row.test_id + " names a case outside the corpus");
    const std::size_t flat = t->second * out.n_train + j->second;
    out.by_kind[static_cast<std::size_t>(row.kind)].values[flat] = 1;
    out.overall.values[flat] = 1;
    auto arts = granularity.article ? std::vector<std::size_t>{*granularity.article} : row.articles;
    out.relations.push_back({row.train_id, row.test_id, j->second, t->second, row.kind, row.scope, std::move(arts)});
  }
  return out;
}

}  // namespace precedent
