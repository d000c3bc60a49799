#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "precedent/error.hpp"

namespace precedent {

/// Outcome of one article for one case. The enumerator order doubles as the
/// class index of the three-way model head.
enum class Outcome : std::uint8_t { kPositive = 0, kNegative = 1, kNull = 2 };

using OutcomeVector = std::vector<Outcome>;

constexpr char outcome_symbol(Outcome o) {
  switch (o) {
    case Outcome::kPositive: return '+';
    case Outcome::kNegative: return '-';
    case Outcome::kNull: return '0';
  }
  return '?';
}

inline Outcome parse_outcome(std::string_view symbol) {
  if (symbol == "+") return Outcome::kPositive;
  if (symbol == "-") return Outcome::kNegative;
  if (symbol == "0") return Outcome::kNull;
  throw Error(ErrorCode::kParse, "outcome must be one of \"+\", \"-\", \"0\", got \"" +
                                     std::string(symbol) + "\"");
}

/// Parses a compact string such as "0+-0".
inline OutcomeVector parse_outcomes(std::string_view compact) {
  OutcomeVector out;
  out.reserve(compact.size());
  for (char ch : compact) out.push_back(parse_outcome(std::string_view(&ch, 1)));
  return out;
}

inline std::string format_outcomes(const OutcomeVector& v) {
  std::string s;
  s.reserve(v.size());
  for (Outcome o : v) s.push_back(outcome_symbol(o));
  return s;
}

enum class Split { kTrain, kValidation, kTest };

constexpr std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw Error(ErrorCode::kParse, "unknown split \"" + std::string(s) + "\"");
}

struct Case {
  std::string id;
  std::optional<std::string> facts_text;
  std::optional<std::vector<double>> embedding;
  OutcomeVector outcomes;
  std::vector<std::string> cites;
  std::optional<std::string> date;
  // Citation-extraction inputs: a display name and application number that
  // other judgments use to refer to this case, and this case's own argument
  // section, where its citations appear.
  std::optional<std::string> name;
  std::optional<std::string> docket;
  std::optional<std::string> arguments_text;

  bool operator==(const Case&) const = default;
};

struct Corpus {
  std::size_t num_articles = 0;
  std::vector<std::string> article_names;
  std::vector<Case> train;
  std::vector<Case> validation;
  std::vector<Case> test;

  bool operator==(const Corpus&) const = default;

  std::vector<Case>& split(Split s) {
    return s == Split::kTrain ? train : s == Split::kValidation ? validation : test;
  }
  const std::vector<Case>& split(Split s) const {
    return s == Split::kTrain ? train : s == Split::kValidation ? validation : test;
  }

  std::size_t size() const { return train.size() + validation.size() + test.size(); }

  template <typename Fn>
  void for_each_case(Fn&& fn) const {
    for (Split s : {Split::kTrain, Split::kValidation, Split::kTest})
      for (const Case& c : split(s)) fn(c, s);
  }

  /// Looks a case up by id across all splits; nullptr when absent.
  const Case* find(std::string_view id) const {
    for (Split s : {Split::kTrain, Split::kValidation, Split::kTest})
      for (const Case& c : split(s))
        if (c.id == id) return &c;
    return nullptr;
  }
};

/// Articles with a non-null outcome, as 0-based indices in ascending order.
inline std::vector<std::size_t> claimed_articles(const OutcomeVector& outcomes) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < outcomes.size(); ++k)
    if (outcomes[k] != Outcome::kNull) out.push_back(k);
  return out;
}

inline std::vector<std::size_t> claimed_articles(const Case& c) { return claimed_articles(c.outcomes); }

struct ValidationOptions {
  // Reject test cases that cite other test cases.
  bool strict_test_citations = false;
};

/// Checks every corpus invariant; throws SchemaError or DanglingEmbedding.
inline void validate(const Corpus& corpus, const ValidationOptions& options = {}) {
  if (corpus.num_articles == 0) throw Error(ErrorCode::kSchema, "num_articles must be >= 1");
  if (!corpus.article_names.empty() && corpus.article_names.size() != corpus.num_articles)
    throw Error(ErrorCode::kSchema, "article_names has " + std::to_string(corpus.article_names.size()) +
                                        " entries, expected " + std::to_string(corpus.num_articles));

  std::unordered_set<std::string> ids;
  std::unordered_set<std::string> test_ids;
  std::optional<std::size_t> embedding_dim;
  corpus.for_each_case([&](const Case& c, Split s) {
    if (c.id.empty()) throw Error(ErrorCode::kSchema, "case with empty id");
    if (!ids.insert(c.id).second) throw Error(ErrorCode::kSchema, "duplicate case id \"" + c.id + "\"");
    if (s == Split::kTest) test_ids.insert(c.id);
    if (c.outcomes.size() != corpus.num_articles)
      throw Error(ErrorCode::kSchema, "case \"" + c.id + "\" has " + std::to_string(c.outcomes.size()) +
                                          " outcomes, expected " + std::to_string(corpus.num_articles));
    if (!c.facts_text && !c.embedding)
      throw Error(ErrorCode::kSchema, "case \"" + c.id + "\" has neither facts_text nor embedding");
    for (const std::string& cited : c.cites)
      if (cited == c.id) throw Error(ErrorCode::kSchema, "case \"" + c.id + "\" cites itself");
    if (c.embedding) {
      if (c.embedding->empty()) throw Error(ErrorCode::kDanglingEmbedding, "case \"" + c.id + "\" has an empty embedding");
      if (!embedding_dim) embedding_dim = c.embedding->size();
      if (*embedding_dim != c.embedding->size())
        throw Error(ErrorCode::kDanglingEmbedding, "case \"" + c.id + "\" embedding has dimension " +
                                                       std::to_string(c.embedding->size()) + ", expected " +
                                                       std::to_string(*embedding_dim));
    }
  });

  if (options.strict_test_citations) {
    for (const Case& c : corpus.test)
      for (const std::string& cited : c.cites)
        if (test_ids.count(cited))
          throw Error(ErrorCode::kSchema, "test case \"" + c.id + "\" cites test case \"" + cited + "\"");
  }
}

}  // namespace precedent
