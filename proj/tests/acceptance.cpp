// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>

#include "checks.hpp"
#include "oracles.hpp"
#include "precedent/cli.hpp"
#include "precedent/synth.hpp"

using namespace precedent;
using namespace precedent::testing;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// 1 and 2 share the probe set: ten random configs per head, alternating the
// hidden layer on and off.
std::vector<Probe> probes() {
  Rng rng(20240601);
  std::vector<Probe> out;
  for (int i = 0; i < 20; ++i)
    out.push_back(random_probe(rng, i % 2 ? Head::kJoint : Head::kSimple, i % 4 < 2 ? Architecture::kMlp : Architecture::kLinear));
  return out;
}

Verdict gradient_check() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (const auto& p : probes()) worst = std::max(worst, rel_error(gradient_at(p, p.theta), finite_difference_gradient(p)));
  const double t = seconds_since(start);
  return {worst <= 1e-4 && t < 10.0, fmt("max rel err %.2e (<= 1e-4), %.2f s (< 10 s)", worst, t)};
}

Verdict hvp_check() {
  Rng rng(7);
  double worst = 0.0, worst_linear = 0.0;
  for (const auto& p : probes()) {
    const auto v = random_vector(rng, p.theta.size());
    worst = std::max(worst, rel_error(hvp_at(p, v), gradient_difference_hvp(p, v)));
    worst_linear = std::max(worst_linear, linearity_residual(p, rng));
  }
  return {worst <= 1e-4 && worst_linear <= 1e-10,
          fmt("max rel err %.2e (<= 1e-4), linearity %.2e (<= 1e-10)", worst, worst_linear)};
}

Verdict inverse_hvp_check() {
  const ConvexFixture f = convex_fixture(3);
  NetworkObjective obj(f.trained, f.train_set, f.test_set, f.config.l2_strength);
  InverseHvpConfig exact;
  exact.method = SolverMethod::kExact;
  exact.damping = 0.01;
  InverseHvpConfig cg = exact;
  cg.method = SolverMethod::kCg;
  double round_trip = 0.0, agreement = 0.0;
  for (std::size_t j = 0; j < obj.num_test(); ++j) {
    const auto v = obj.test_gradient(j);
    const auto x = inverse_hvp(obj, v, exact).x;
    round_trip = std::max(round_trip, rel_error(detail::damped(obj, x, exact.damping, {}), v));
    agreement = std::max(agreement, rel_error(inverse_hvp(obj, v, cg).x, x));
  }
  return {round_trip <= 1e-6 && agreement <= 1e-5 && obj.num_params() <= 200,
          fmt("P=%zu, round trip %.2e (<= 1e-6), CG vs exact %.2e (<= 1e-5)", obj.num_params(), round_trip, agreement)};
}

Verdict loo_check() {
  const auto start = std::chrono::steady_clock::now();
  const ConvexFixture f = convex_fixture(1, 50, 10);
  const LooAgreement a = loo_agreement(f);
  const double t = seconds_since(start);
  return {a.min_rho >= 0.95 && a.sign_agreement >= 0.9 && t < 120.0,
          fmt("min rho %.4f (>= 0.95), mean rho %.4f, sign agreement %.3f (>= 0.9), %.1f s (< 120 s)", a.min_rho,
              a.mean_rho, a.sign_agreement, t)};
}

Verdict perturbation_check() {
  const ConvexFixture f = convex_fixture(1, 50, 10);
  double worst_ratio = 1e300;
  std::string detail;
  for (std::size_t z : {0u, 17u, 42u}) {
    const auto e = perturbation_errors(f, z, {1e-3, 1e-4});
    const double ratio = e[0] / e[1];
    worst_ratio = std::min(worst_ratio, ratio);
    detail += fmt("z=%zu: %.2e -> %.2e; ", z, e[0], e[1]);
  }
  return {worst_ratio >= 1.8, detail + fmt("min ratio %.1f (>= 1.8)", worst_ratio)};
}

Verdict ridge_check() {
  const Ridge r;
  InverseHvpConfig c;
  c.method = SolverMethod::kExact;
  c.damping = 0.0;
  const double iota = influence_score(r, 0, 0, c);
  return {std::abs(iota - 0.25) <= 1e-9, fmt("iota %.12f (0.25 +- 1e-9)", iota)};
}

std::string describe(const KindSet& kinds) {
  if (kinds.none()) return "No precedent";
  const char* names[] = {"Applied positive", "Applied negative", "Distinguished positive", "Distinguished negative"};
  std::string out;
  for (std::size_t i = 0; i < 4; ++i)
    if (kinds.test(i)) out += (out.empty() ? "" : " + ") + std::string(names[i]);
  return out;
}

Verdict taxonomy_check() {
  const auto here = parse_outcomes("0+-0");
  const std::vector<std::pair<std::string, std::string>> example = {{"0+00", "Applied positive"},
                                                                    {"00-0", "Applied negative"},
                                                                    {"00+0", "Distinguished positive"},
                                                                    {"0-00", "Distinguished negative"},
                                                                    {"000+", "No precedent"}};
  bool example_ok = true;
  for (const auto& [cited, label] : example) example_ok &= describe(relate_per_case(here, parse_outcomes(cited))) == label;

  const auto start = std::chrono::steady_clock::now();
  std::size_t mismatches = 0, pairs = 0;
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
          KindSet got;
          for (std::size_t b = 0; b < 4; ++b) got.set(b, lab.by_kind[b].at(t, j) == 1);
          mismatches += got != expected || (lab.overall.at(t, j) == 1) != expected.any();
          ++pairs;
        }
    }
  }
  const double t = seconds_since(start);
  return {example_ok && mismatches == 0 && t < 1.0,
          fmt("five-candidate example %s, %zu/%zu pairs disagree, %.3f s (< 1 s)", example_ok ? "exact" : "WRONG",
              mismatches, pairs, t)};
}

Verdict filter_check() {
  Rng rng(99);
  std::size_t corpora = 0, violations = 0, not_idempotent = 0, oracle_mismatch = 0, attempts = 0;
  while (corpora < 100 && attempts < 1000) {
    ++attempts;
    const Corpus c = random_corpus(rng, 5 + rng.below(30), 2 + rng.below(10), rng.below(3), 3, 0.02 + 0.1 * rng.uniform());
    const auto [train, test] = filter_oracle(c, CitedBy::kTestOnly);
    if (train.empty() || test.empty()) continue;
    ++corpora;
    const Corpus once = filter_for_precedent(c, explicit_network(c), CitedBy::kTestOnly);
    for (const auto& tr : once.train) {
      bool cited = false;
      for (const auto& te : once.test) cited = cited || std::find(te.cites.begin(), te.cites.end(), tr.id) != te.cites.end();
      violations += !cited;
    }
    std::set<std::string> kept_train, kept_test;
    for (const auto& x : once.train) kept_train.insert(x.id);
    for (const auto& x : once.test) kept_test.insert(x.id);
    oracle_mismatch += kept_train != train || kept_test != test;
    not_idempotent += filter_for_precedent(once, explicit_network(once), CitedBy::kTestOnly) != once;
  }
  return {corpora == 100 && violations == 0 && not_idempotent == 0 && oracle_mismatch == 0,
          fmt("%zu corpora, %zu uncited train cases, %zu non-idempotent, %zu oracle mismatches", corpora, violations,
              not_idempotent, oracle_mismatch)};
}

Verdict spearman_check() {
  Rng rng(5);
  double worst = 0.0, worst_invariance = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(80);
    std::vector<double> s(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial % 2 ? std::floor(rng.uniform() * 4.0) : rng.normal();
      c[i] = static_cast<double>(rng.below(2 + trial % 3));
    }
    if (std::all_of(s.begin(), s.end(), [&](double v) { return v == s[0]; })) s[0] += 1.0;
    if (std::all_of(c.begin(), c.end(), [&](double v) { return v == c[0]; })) c[0] += 1.0;
    const double rho = spearman(s, c);
    worst = std::max(worst, std::abs(rho - reference_spearman(s, c)));
    std::vector<double> mono(n);
    for (std::size_t i = 0; i < n; ++i) mono[i] = std::atan(s[i]) * 5.0 + 2.0;
    worst_invariance = std::max(worst_invariance, std::abs(spearman(mono, c) - rho));
  }
  return {worst <= 1e-12 && worst_invariance <= 1e-12,
          fmt("max |rho - reference| %.1e (<= 1e-12), monotone transform shift %.1e", worst, worst_invariance)};
}

Verdict classifier_check() {
  Rng rng(12);
  double worst_gap = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> s(80), c(80);
    for (std::size_t i = 0; i < s.size(); ++i) {
      c[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
      s[i] = rng.normal() + 0.8 * c[i];
    }
    const auto p = fit_classifier(s, c);
    worst_gap = std::max(worst_gap, std::abs(classifier_objective(p.a, p.b, s, c, p.lambda) - grid_best(s, c, p.lambda)));
  }
  bool semantics = true;
  double f1 = 1.0;
  for (double shift : {-2.0, 0.0, 3.0}) {
    std::vector<double> s = {-3, -2, -1, -0.5, 0.5, 1, 2, 3}, c = {0, 0, 0, 0, 1, 1, 1, 1};
    for (double& v : s) v += shift;
    const auto p = fit_classifier(s, c);
    const auto r = classifier_report(p, s, c);
    f1 = std::min(f1, r.f1.f1);
    semantics &= r.threshold.has_value();
    if (r.threshold)
      for (double v : s) semantics &= classify(p, v) == (v > *r.threshold);
  }
  std::vector<double> s = {-2, -1, 0, 1, 2, 3, -3, 0.5, 1.5, -0.5}, c = {0, 0, 0, 1, 1, 1, 0, 0, 1, 0};
  const auto j = to_json(classifier_report(fit_classifier(s, c), s, c));
  const bool shape = j.contains("threshold") && j.contains("f1") && j.contains("baseline_f1") && j.contains("gain");
  return {worst_gap <= 1e-3 && semantics && f1 == 1.0 && shape,
          fmt("grid gap %.1e (<= 1e-3), separable F1 %.3f, threshold semantics %s, report fields %s", worst_gap, f1,
              semantics ? "hold" : "BROKEN", shape ? "present" : "MISSING")};
}

Verdict end_to_end_check() {
  const auto start = std::chrono::steady_clock::now();
  SynthConfig s;
  s.num_articles = 4;
  s.n_train = 200;
  s.n_test = 40;
  s.applied_bias = 0.9;
  s.noise_sigma = 0.1;
  s.seed = 1;
  const Corpus raw = generate(s).corpus;
  const auto raw_network = explicit_network(raw);
  const Corpus corpus = filter_for_precedent(raw, raw_network, CitedBy::kAnySplit);

  ModelConfig m;
  m.head = Head::kJoint;
  m.d1 = s.d1;
  m.d2 = 8;
  m.num_articles = s.num_articles;
  m.learning_rate = 0.5;
  m.max_epochs = 300;
  m.batch_size = 0;
  m.dropout_rate = 0.0;
  m.l2_strength = 1e-3;
  m.seed = 1;
  const auto trained = train(corpus, m);
  const auto preds = predict(trained.params, corpus.test);
  std::vector<OutcomeVector> gold;
  for (const auto& t : corpus.test) gold.push_back(t.outcomes);
  const double f1 = micro_f1(preds.decoded(), gold).f1;

  const Dataset tr = to_dataset(corpus.train, m.d1), te = to_dataset(corpus.test, m.d1);
  NetworkObjective obj(trained.params, tr, te, m.l2_strength);
  InverseHvpConfig cfg;
  cfg.method = SolverMethod::kExact;
  cfg.damping = 0.01;
  const InfluenceMatrix matrix = influence_matrix(obj, cfg).matrix;

  const Labeling claimed = label_corpus(corpus, restrict_network(raw_network, corpus), Scope::kClaimed);
  CorrelationInputs in{&claimed, nullptr, std::nullopt, ScoreOrientation::kHelpfulness};
  auto rho = [&](PrecedentKind k) {
    const auto row = correlate(matrix, {k, Scope::kClaimed, Granularity::per_case(), PairFilter::kAll}, in);
    return row.rho.value_or(std::nan(""));
  };
  const double ap = rho(PrecedentKind::kAppliedPositive);
  const double dp = rho(PrecedentKind::kDistinguishedPositive);
  const double t = seconds_since(start);
  return {f1 >= 0.9 && ap > 0.0 && ap > dp && t < 300.0,
          fmt("micro-F1 %.3f (>= 0.9), rho(AP, claimed) %.4f (> 0), rho(DP, claimed) %.4f (< AP), %.1f s (< 300 s)", f1,
              ap, dp, t)};
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"precedent"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

Verdict determinism_check() {
  ScratchDir a("accept-det-a"), b("accept-det-b");
  const std::vector<std::string> flags = {"--seed", "2", "--head", "joint", "--d2", "8", "--lr", "0.1", "--epochs", "20", "--solver", "exact"};
  auto args = [&](const ScratchDir& d) {
    std::vector<std::string> v = {"pipeline", "--out", d.path.string()};
    v.insert(v.end(), flags.begin(), flags.end());
    return v;
  };
  const int ca = run_cli(args(a)), cb = run_cli(args(b));
  if (ca != 0 || cb != 0) return {false, fmt("pipeline exit codes %d and %d", ca, cb)};
  std::size_t differ = 0;
  std::string names;
  for (const char* f : {"report.json", "report.tsv", "correlation_report.json", "classifier_report.json", "influence.bin"}) {
    const bool same = read_file(a.path / f) == read_file(b.path / f) && !read_file(a.path / f).empty();
    differ += !same;
    names += std::string(f) + (same ? " identical; " : " DIFFERS; ");
  }
  return {differ == 0, names};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient vs finite differences", gradient_check},
      {"HVP vs gradient differencing", hvp_check},
      {"inverse-HVP round trip", inverse_hvp_check},
      {"influence vs leave-one-out", loo_check},
      {"parameter perturbation", perturbation_check},
      {"ridge closed form", ridge_check},
      {"taxonomy fidelity", taxonomy_check},
      {"corpus filtering", filter_check},
      {"Spearman", spearman_check},
      {"threshold classifier", classifier_check},
      {"end-to-end positive control", end_to_end_check},
      {"determinism", determinism_check},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failures += !r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << r.detail << std::endl;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << criteria.size() - failures << "/" << criteria.size() << std::endl;
  return failures ? 1 : 0;
}
