#include <chrono>
#include <sstream>

#include <gtest/gtest.h>

#include "precedent/taxonomy.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace precedent {
namespace {

using testing::oracle_kinds;
using testing::all_vectors;

using testing::make_case;

std::string describe(const OutcomeVector& citing, const OutcomeVector& cited) {
  const KindSet kinds = relate_per_case(citing, cited);
  if (kinds.none()) return "No precedent";
  std::string out;
  const char* names[] = {"Applied positive", "Applied negative", "Distinguished positive", "Distinguished negative"};
  for (std::size_t i = 0; i < 4; ++i)
    if (kinds.test(i)) out += (out.empty() ? "" : " + ") + std::string(names[i]);
  return out;
}

TEST(Taxonomy, FiveCandidateExample) {
  const auto here = parse_outcomes("0+-0");
  EXPECT_EQ(describe(here, parse_outcomes("0+00")), "Applied positive");
  EXPECT_EQ(describe(here, parse_outcomes("00-0")), "Applied negative");
  EXPECT_EQ(describe(here, parse_outcomes("00+0")), "Distinguished positive");
  EXPECT_EQ(describe(here, parse_outcomes("0-00")), "Distinguished negative");
  EXPECT_EQ(describe(here, parse_outcomes("000+")), "No precedent");
}

TEST(Taxonomy, PairCanCarryBothPolarities) {
  const KindSet kinds = relate_per_case(parse_outcomes("0+-0"), parse_outcomes("0-+0"));
  EXPECT_EQ(kinds, kind_bit(PrecedentKind::kDistinguishedNegative) | kind_bit(PrecedentKind::kDistinguishedPositive));
}

TEST(Taxonomy, PerArticleErrors) {
  EXPECT_THROW(relate_per_article(parse_outcomes("+"), parse_outcomes("+"), 1), Error);
  EXPECT_THROW(relate_per_case(parse_outcomes("+"), parse_outcomes("++")), Error);
}

TEST(Taxonomy, ExhaustiveOracleUpToThreeArticles) {
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto vectors = all_vectors(k);
    Corpus corpus;
    corpus.num_articles = k;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      corpus.train.push_back(make_case("tr" + std::to_string(i), format_outcomes(vectors[i])));
      corpus.test.push_back(make_case("te" + std::to_string(i), format_outcomes(vectors[i])));
    }
    for (PerCaseRule rule : {PerCaseRule::kExistential, PerCaseRule::kStrict}) {
      const Labeling lab = label_corpus(corpus, {}, Scope::kClaimed, Granularity::per_case(), {rule});
      for (std::size_t t = 0; t < vectors.size(); ++t)
        for (std::size_t j = 0; j < vectors.size(); ++j) {
          const KindSet expected = oracle_kinds(vectors[t], vectors[j], rule);
          EXPECT_EQ(relate_per_case(vectors[t], vectors[j], rule), expected);
          for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(lab.by_kind[b].at(t, j) == 1, expected.test(b));
          EXPECT_EQ(lab.overall.at(t, j) == 1, expected.any());
        }
    }
    for (std::size_t a = 0; a < k; ++a) {
      const Labeling lab = label_corpus(corpus, {}, Scope::kClaimed, Granularity::per_article(a));
      for (std::size_t t = 0; t < vectors.size(); ++t)
        for (std::size_t j = 0; j < vectors.size(); ++j) {
          OutcomeVector x{vectors[t][a]}, y{vectors[j][a]};
          const KindSet expected = oracle_kinds(x, y, PerCaseRule::kExistential);
          for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(lab.by_kind[b].at(t, j) == 1, expected.test(b));
        }
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 1.0);
}

Corpus cited_fixture() {
  Corpus c;
  c.num_articles = 3;
  c.train = {make_case("a", "+00"), make_case("b", "-+0"), make_case("c", "00+"), make_case("d", "0-0")};
  c.test = {make_case("t", "++0", {"a", "b", "c"}), make_case("u", "0-+", {"d", "c"})};
  return c;
}

TEST(Label, CitedScopeUsesEdgesAndSharedClaims) {
  const Corpus c = cited_fixture();
  const auto net = explicit_network(c);
  const Labeling lab = label_corpus(c, net, Scope::kCited);
  // t cites a (AP at 1), b (DN at 1, AP at 2), c (no shared claim).
  EXPECT_EQ(lab.matrix(PrecedentKind::kAppliedPositive).at(0, 0), 1);
  EXPECT_EQ(lab.matrix(PrecedentKind::kAppliedPositive).at(0, 1), 1);
  EXPECT_EQ(lab.matrix(PrecedentKind::kDistinguishedNegative).at(0, 1), 1);
  EXPECT_EQ(lab.overall.at(0, 2), 0);
  EXPECT_EQ(lab.overall.at(0, 3), 0);
  // u cites d (AN at 2) and c (AP at 3).
  EXPECT_EQ(lab.matrix(PrecedentKind::kAppliedNegative).at(1, 3), 1);
  EXPECT_EQ(lab.matrix(PrecedentKind::kAppliedPositive).at(1, 2), 1);
  ASSERT_EQ(lab.mixed_pairs.size(), 1u);
  EXPECT_EQ(lab.mixed_pairs[0], (std::pair<std::size_t, std::size_t>{0, 1}));
  const auto counts = census(lab);
  EXPECT_EQ(counts.at(PrecedentKind::kAppliedPositive), 3u);
  EXPECT_EQ(counts.at(PrecedentKind::kAppliedNegative), 1u);
  EXPECT_EQ(counts.at(PrecedentKind::kDistinguishedPositive), 0u);
  EXPECT_EQ(counts.at(PrecedentKind::kDistinguishedNegative), 1u);
}

TEST(Label, CitedIsSubsetOfClaimed) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Corpus c = testing::random_corpus(rng, 30, 10, 0, 4, 0.15);
    const auto net = explicit_network(c);
    if (net.edge_count() == 0) continue;
    const Labeling cited = label_corpus(c, net, Scope::kCited);
    const Labeling claimed = label_corpus(c, net, Scope::kClaimed);
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t f = 0; f < cited.by_kind[b].values.size(); ++f)
        if (cited.by_kind[b].values[f]) {
          EXPECT_EQ(claimed.by_kind[b].values[f], 1);
        }
  }
}

TEST(Label, CitedScopeNeedsANetwork) {
  try {
    label_corpus(cited_fixture(), {}, Scope::kCited);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kScopeUnavailable);
  }
}

TEST(Label, ModelBasedFlipTurnsAppliedIntoDistinguished) {
  const Corpus c = cited_fixture();
  const auto net = explicit_network(c);
  std::vector<OutcomeVector> preds = {c.test[0].outcomes, c.test[1].outcomes};
  const Labeling gold = relabel_model_based(c, preds, net, Scope::kCited, Granularity::per_article(0));
  EXPECT_EQ(gold.matrix(PrecedentKind::kAppliedPositive).at(0, 0), 1);
  preds[0][0] = Outcome::kNegative;
  const Labeling flipped = relabel_model_based(c, preds, net, Scope::kCited, Granularity::per_article(0));
  EXPECT_EQ(flipped.matrix(PrecedentKind::kAppliedPositive).at(0, 0), 0);
  EXPECT_EQ(flipped.matrix(PrecedentKind::kDistinguishedPositive).at(0, 0), 1);
  preds.pop_back();
  EXPECT_THROW(relabel_model_based(c, preds, net, Scope::kCited), Error);
}

TEST(Label, RelationsTsvRoundTrip) {
  const Corpus c = cited_fixture();
  const auto net = explicit_network(c);
  for (Granularity g : {Granularity::per_case(), Granularity::per_article(1)}) {
    const Labeling lab = label_corpus(c, net, Scope::kClaimed, g);
    std::ostringstream out;
    write_relations_tsv(out, lab.relations);
    std::istringstream in(out.str());
    const auto rows = read_relations_tsv(in);
    ASSERT_EQ(rows.size(), lab.relations.size());
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i], to_row(lab.relations[i]));
    const Labeling back = labeling_from_rows(c, rows, Scope::kClaimed, g);
    EXPECT_EQ(back.overall.values, lab.overall.values);
    for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(back.by_kind[b].values, lab.by_kind[b].values);
  }
  std::istringstream bad("a\tt\tapplied-positive\tcited\t0\n");
  EXPECT_THROW(read_relations_tsv(bad), Error);
}

}  // namespace
}  // namespace precedent
