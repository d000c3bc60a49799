#include <gtest/gtest.h>

#include "checks.hpp"
#include "oracles.hpp"

namespace precedent {
namespace {

using testing::reference_spearman;
using testing::grid_best;

TEST(Spearman, HandExample) {
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 1}), 0.8660, 1e-4);
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 1}), std::sqrt(3.0) / 2.0, 1e-15);
}

TEST(Spearman, FractionalRanks) {
  EXPECT_EQ(fractional_ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Spearman, AgreesWithReferenceOnTiedVectors) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> s(n), c(n);
    const std::size_t levels = 1 + rng.below(4);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial % 2 ? std::floor(rng.uniform() * 3.0) : rng.normal();
      c[i] = static_cast<double>(rng.below(levels + 1));
    }
    if (std::all_of(s.begin(), s.end(), [&](double v) { return v == s[0]; })) s[0] += 1.0;
    if (std::all_of(c.begin(), c.end(), [&](double v) { return v == c[0]; })) c[0] += 1.0;
    EXPECT_NEAR(spearman(s, c), reference_spearman(s, c), 1e-12);
  }
}

TEST(Spearman, InvariancesAndAntisymmetry) {
  Rng rng(8);
  std::vector<double> s(50), c(50);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.normal();
    c[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
  }
  const double rho = spearman(s, c);
  std::vector<double> mono(s.size()), neg(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    mono[i] = std::exp(3.0 * s[i]) + 7.0;
    neg[i] = -s[i];
  }
  EXPECT_NEAR(spearman(mono, c), rho, 1e-12);
  EXPECT_NEAR(spearman(neg, c), -rho, 1e-12);

  std::vector<std::size_t> perm(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<double> ps(s.size()), pc(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    ps[i] = s[perm[i]];
    pc[i] = c[perm[i]];
  }
  EXPECT_NEAR(spearman(ps, pc), rho, 1e-12);
}

TEST(Spearman, Errors) {
  auto code = [](std::vector<double> s, std::vector<double> c) {
    try {
      spearman(s, c);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIo;
  };
  EXPECT_EQ(code({1, 2}, {1, 2, 3}), ErrorCode::kLengthMismatch);
  EXPECT_EQ(code({1}, {1}), ErrorCode::kLengthMismatch);
  EXPECT_EQ(code({1, 1, 1}, {0, 1, 0}), ErrorCode::kConstantVector);
  EXPECT_EQ(code({1, 2, 3}, {0, 0, 0}), ErrorCode::kConstantVector);
}

Labeling one_kind_labeling(const LabelMatrix& m) {
  Labeling l;
  l.scope = Scope::kCited;
  l.n_test = m.n_test;
  l.n_train = m.n_train;
  for (auto& b : l.by_kind) b = {m.n_train, m.n_test, std::vector<std::uint8_t>(m.values.size(), 0)};
  l.by_kind[0] = m;
  l.overall = m;
  return l;
}

TEST(Correlate, TopDecileLabelsGivePositiveRho) {
  Rng rng(9);
  InfluenceMatrix m{4, 50, {}};
  for (std::size_t i = 0; i < 200; ++i) m.values.push_back(rng.normal());
  // Helpfulness is -iota, so the most helpful decile has the lowest iota.
  std::vector<double> sorted = m.values;
  std::sort(sorted.begin(), sorted.end());
  double best_rho = -2.0;
  std::size_t best_decile = 99;
  for (std::size_t d = 0; d < 10; ++d) {
    LabelMatrix labels{50, 4, {}};
    for (double v : m.values) labels.values.push_back(v >= sorted[d * 20] && v <= sorted[d * 20 + 19]);
    const auto lab = one_kind_labeling(labels);
    const CorrelationInputs in{&lab, nullptr, std::nullopt, ScoreOrientation::kHelpfulness};
    const auto row = correlate(m, {PrecedentKind::kAppliedPositive, Scope::kCited, {}, PairFilter::kAll}, in);
    ASSERT_TRUE(row.rho.has_value());
    EXPECT_EQ(row.positives, 20u);
    if (*row.rho > best_rho) {
      best_rho = *row.rho;
      best_decile = d;
    }
  }
  EXPECT_EQ(best_decile, 0u);
  EXPECT_GT(best_rho, 0.0);
}

TEST(Correlate, FiltersAndSkips) {
  InfluenceMatrix m{2, 3, {-3, -2, -1, 1, 2, 3}};
  LabelMatrix labels{3, 2, {1, 0, 0, 0, 0, 0}};
  const auto lab = one_kind_labeling(labels);
  CorrelationInputs in{&lab, nullptr, std::nullopt, ScoreOrientation::kHelpfulness};
  const auto all = correlate(m, {std::nullopt, Scope::kCited, {}, PairFilter::kAll}, in);
  EXPECT_EQ(all.pairs, 6u);
  ASSERT_TRUE(all.rho);
  EXPECT_GT(*all.rho, 0.0);

  in.correct = std::vector<bool>{false, true};
  const auto only = correlate(m, {std::nullopt, Scope::kCited, {}, PairFilter::kCorrectOnly}, in);
  EXPECT_FALSE(only.rho);
  EXPECT_EQ(only.pairs, 3u);
  EXPECT_FALSE(only.skip_reason.empty());

  in.correct = std::vector<bool>{false, false};
  EXPECT_EQ(correlate(m, {std::nullopt, Scope::kCited, {}, PairFilter::kCorrectOnly}, in).test_cases, 0u);
  EXPECT_THROW(correlate(m, {std::nullopt, Scope::kCited, {}, PairFilter::kModelBased}, in), Error);
  EXPECT_THROW(correlate(m, {std::nullopt, Scope::kClaimed, {}, PairFilter::kAll}, in), Error);

  const auto raw = correlate(m, {std::nullopt, Scope::kCited, {}, PairFilter::kAll}, {&lab, nullptr, {}, ScoreOrientation::kRaw});
  EXPECT_NEAR(*raw.rho, -*all.rho, 1e-15);
}

TEST(Correlate, CorrectMask) {
  const std::vector<Case> test = {testing::make_case("a", "+-0"), testing::make_case("b", "0+0")};
  const std::vector<OutcomeVector> pred = {parse_outcomes("+-+"), parse_outcomes("0+0")};
  EXPECT_EQ(correct_mask(pred, test, {}, CorrectnessMode::kExactVector), (std::vector<bool>{false, true}));
  EXPECT_EQ(correct_mask(pred, test, {}, CorrectnessMode::kPerArticle), (std::vector<bool>{true, true}));
  EXPECT_EQ(correct_mask(pred, test, Granularity::per_article(2), CorrectnessMode::kPerArticle),
            (std::vector<bool>{false, true}));
}

TEST(PerArticle, PlantedArticleStandsOut) {
  // Three articles, every test case claims all; the labels at article 2
  // (index 1) follow helpfulness, the others are coin flips.
  Rng rng(10);
  Corpus corpus;
  corpus.num_articles = 3;
  for (int i = 0; i < 40; ++i) corpus.train.push_back(testing::make_case("tr" + std::to_string(i), "+++"));
  for (int t = 0; t < 2; ++t) corpus.test.push_back(testing::make_case("te" + std::to_string(t), "+++"));
  InfluenceMatrix m{2, 40, {}};
  for (int i = 0; i < 80; ++i) m.values.push_back(rng.normal());
  for (std::size_t i = 0; i < 40; ++i) {
    Case& tr = corpus.train[i];
    tr.outcomes[0] = rng.bernoulli(0.5) ? Outcome::kPositive : Outcome::kNegative;
    tr.outcomes[2] = rng.bernoulli(0.5) ? Outcome::kPositive : Outcome::kNegative;
    // Article 2: positive iff the column's mean helpfulness is positive.
    tr.outcomes[1] = m.at(0, i) + m.at(1, i) < 0 ? Outcome::kPositive : Outcome::kNegative;
  }
  std::vector<OutcomeVector> claims;
  for (const auto& t : corpus.test) claims.push_back(t.outcomes);
  std::vector<double> rho;
  std::size_t per_article_positives = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto lab = label_corpus(corpus, {}, Scope::kClaimed, Granularity::per_article(k));
    const auto row = per_article_correlate(m, lab, claims, k, PrecedentKind::kAppliedPositive);
    rho.push_back(row.rho.value_or(0.0));
    per_article_positives += row.positives;
  }
  EXPECT_GT(rho[1], 0.3);
  EXPECT_LT(std::abs(rho[0]), 0.25);
  EXPECT_LT(std::abs(rho[2]), 0.25);
  const auto per_case = label_corpus(corpus, {}, Scope::kClaimed);
  EXPECT_GE(per_article_positives, per_case.matrix(PrecedentKind::kAppliedPositive).positives());

  claims.assign(2, parse_outcomes("+0+"));
  const auto lab1 = label_corpus(corpus, {}, Scope::kClaimed, Granularity::per_article(1));
  try {
    per_article_correlate(m, lab1, claims, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoEligiblePairs);
  }
}

TEST(TableSpecs, FourKindsThenOverall) {
  const auto specs = table_specs(Scope::kClaimed);
  ASSERT_EQ(specs.size(), 5u);
  EXPECT_EQ(specs[0].kind, PrecedentKind::kAppliedPositive);
  EXPECT_FALSE(specs[4].kind.has_value());
}

TEST(Classifier, MatchesGridSearch) {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> s(80), c(80);
    for (std::size_t i = 0; i < s.size(); ++i) {
      c[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
      s[i] = rng.normal() + 0.8 * c[i];
    }
    const auto p = fit_classifier(s, c);
    EXPECT_TRUE(p.converged);
    const double fitted = classifier_objective(p.a, p.b, s, c, p.lambda);
    const double grid = grid_best(s, c, p.lambda);
    EXPECT_GE(fitted, grid - 1e-9);
    EXPECT_LE(std::abs(fitted - grid), 1e-3);
  }
}

TEST(Classifier, SeparableFixtureThresholdSemantics) {
  const std::vector<double> s = {-3, -2, -1, -0.5, 0.5, 1, 2, 3};
  const std::vector<double> c = {0, 0, 0, 0, 1, 1, 1, 1};
  const auto p = fit_classifier(s, c, 1e-4);
  ASSERT_GT(p.a, 0.0);
  const auto report = classifier_report(p, s, c);
  EXPECT_DOUBLE_EQ(report.f1.f1, 1.0);
  ASSERT_TRUE(report.threshold);
  EXPECT_GT(*report.threshold, -0.5);
  EXPECT_LT(*report.threshold, 0.5);
  for (double v : s) EXPECT_EQ(classify(p, v), v > *report.threshold);
  // A score exactly at -b/a counts as precedent.
  EXPECT_TRUE(classify(p, *report.threshold + 1e-12));
}

TEST(Classifier, ScalingScoresRescalesSlope) {
  Rng rng(13);
  std::vector<double> s(60), c(60), s10(60);
  for (std::size_t i = 0; i < s.size(); ++i) {
    c[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
    s[i] = rng.normal() + c[i];
    s10[i] = 10.0 * s[i];
  }
  const auto p = fit_classifier(s, c, 1e-6);
  const auto q = fit_classifier(s10, c, 1e-6);
  EXPECT_NEAR(q.a, p.a / 10.0, 1e-3 * std::abs(p.a));
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(classify(p, s[i]), classify(q, s10[i]));
}

TEST(Classifier, Errors) {
  EXPECT_THROW(fit_classifier(std::vector<double>{1, 2}, std::vector<double>{1, 1}), Error);
  EXPECT_THROW(fit_classifier(std::vector<double>{1, 2}, std::vector<double>{1, 0}, 0.0), Error);
  ClassifierParams never{0.0, -1.0};
  try {
    classifier_report(never, std::vector<double>{1, 2}, std::vector<double>{0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateF1);
  }
}

TEST(Classifier, RandomBaselineMatchesSimulation) {
  // A predictor emitting 1 with probability q on labels with rate 0.1.
  const double pi = 0.1;
  Rng rng(14);
  for (double q : {0.1, 1.0}) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (int n = 0; n < 1000000; ++n) {
      const bool g = rng.bernoulli(pi);
      const bool p = rng.bernoulli(q);
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    const double simulated = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    EXPECT_NEAR(random_baseline_f1(pi, q), simulated, 0.005) << q;
  }
  EXPECT_NEAR(random_baseline_f1(0.1, 1.0), 2.0 * 0.1 / 1.1, 1e-15);
  EXPECT_DOUBLE_EQ(random_baseline_f1(0.1, 0.1), 0.1);
}

TEST(Classifier, ReportCarriesBaselineAndGain) {
  std::vector<double> s = {-2, -1, 0, 1, 2, 3, -3, 0.5, 1.5, -0.5};
  std::vector<double> c = {0, 0, 0, 1, 1, 1, 0, 0, 1, 0};
  const auto r = classifier_report(fit_classifier(s, c), s, c);
  EXPECT_DOUBLE_EQ(r.positive_rate, 0.4);
  EXPECT_DOUBLE_EQ(r.baseline_f1, 0.4);
  EXPECT_DOUBLE_EQ(r.always_positive_f1, 0.8 / 1.4);
  EXPECT_DOUBLE_EQ(r.gain, r.f1.f1 - r.baseline_f1);
  const auto j = to_json(r);
  for (const char* key : {"threshold", "f1", "baseline_f1", "gain"}) EXPECT_TRUE(j.contains(key)) << key;
}

}  // namespace
}  // namespace precedent
