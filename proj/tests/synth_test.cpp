#include <gtest/gtest.h>

#include "precedent/corpus_io.hpp"
#include "precedent/filter.hpp"
#include "precedent/synth.hpp"
#include "precedent/taxonomy.hpp"

namespace precedent {
namespace {

std::vector<RelationRow> rows(const std::vector<PrecedentRelation>& relations) {
  std::vector<RelationRow> out;
  for (const auto& r : relations) out.push_back(to_row(r));
  std::sort(out.begin(), out.end());
  return out;
}

TEST(Synth, SameSeedSameCorpus) {
  SynthConfig c;
  c.seed = 5;
  c.n_validation = 10;
  EXPECT_EQ(serialize_corpus(generate(c).corpus), serialize_corpus(generate(c).corpus));
  SynthConfig d = c;
  d.seed = 6;
  EXPECT_NE(serialize_corpus(generate(d).corpus), serialize_corpus(generate(c).corpus));
}

TEST(Synth, ShapeAndCoverage) {
  SynthConfig c;
  c.seed = 1;
  c.n_validation = 7;
  const auto r = generate(c);
  EXPECT_EQ(r.corpus.train.size(), c.n_train);
  EXPECT_EQ(r.corpus.validation.size(), 7u);
  EXPECT_EQ(r.corpus.test.size(), c.n_test);
  EXPECT_NO_THROW(validate(r.corpus, {.strict_test_citations = true}));
  for (const auto& t : r.corpus.test) {
    EXPECT_GE(t.cites.size(), c.cite_per_test);
    EXPECT_EQ(t.embedding->size(), c.d1);
    EXPECT_FALSE(claimed_articles(t).empty());
  }
  const auto net = explicit_network(r.corpus);
  EXPECT_EQ(filter_for_precedent(r.corpus, net, CitedBy::kTestOnly), r.corpus);
  EXPECT_EQ(filter_for_precedent(r.corpus, net, CitedBy::kAnySplit), r.corpus);
}

TEST(Synth, TaxonomyReproducesPlantedRelations) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthConfig c;
    c.seed = seed;
    c.applied_bias = 0.6;
    const auto r = generate(c);
    const auto lab = label_corpus(r.corpus, explicit_network(r.corpus), Scope::kCited);
    EXPECT_EQ(rows(lab.relations), rows(r.relations));
    EXPECT_TRUE(lab.mixed_pairs.empty());
    // Census matches the generator's own counts.
    const auto counts = census(lab);
    for (PrecedentKind k : kAllKinds)
      EXPECT_EQ(counts.at(k), static_cast<std::size_t>(std::count_if(
                                  r.relations.begin(), r.relations.end(), [&](const auto& x) { return x.kind == k; })));
  }
}

TEST(Synth, FullAppliedBiasPlantsOnlyAppliedPrecedent) {
  SynthConfig c;
  c.seed = 4;
  c.applied_bias = 1.0;
  const auto r = generate(c);
  ASSERT_FALSE(r.relations.empty());
  for (const auto& rel : r.relations) EXPECT_TRUE(is_applied(rel.kind));
  c.applied_bias = 0.0;
  for (const auto& rel : generate(c).relations) EXPECT_FALSE(is_applied(rel.kind));
}

TEST(Synth, WrittenCitationsResolveToTheSameNetwork) {
  SynthConfig c;
  c.seed = 2;
  c.emit_text = true;
  Corpus corpus = generate(c).corpus;
  const auto expected = explicit_network(corpus).edges;
  for (auto& t : corpus.test) t.cites.clear();
  const auto extracted = build_network(corpus, default_citation_patterns());
  EXPECT_EQ(extracted.edges, expected);
  EXPECT_TRUE(extracted.unresolved.empty());
}

TEST(Synth, ConfigValidationAndJson) {
  SynthConfig c;
  c.d1 = 4;
  EXPECT_THROW(generate(c), Error);
  c = {};
  c.cite_per_test = c.n_train + 1;
  EXPECT_THROW(generate(c), Error);
  c = {};
  c.signal_scale = 2.5;
  c.emit_text = true;
  EXPECT_EQ(synth_config_from_json(nlohmann::json::parse(to_json(c).dump())), c);
}

TEST(PartnerClass, SharedClaimAgreement) {
  EXPECT_EQ(partner_class(parse_outcomes("+0"), parse_outcomes("+-")), PartnerClass::kApplied);
  EXPECT_EQ(partner_class(parse_outcomes("+0"), parse_outcomes("-0")), PartnerClass::kDistinguished);
  EXPECT_EQ(partner_class(parse_outcomes("+-"), parse_outcomes("++")), PartnerClass::kMixed);
  EXPECT_EQ(partner_class(parse_outcomes("+0"), parse_outcomes("0+")), PartnerClass::kNone);
}

}  // namespace
}  // namespace precedent
