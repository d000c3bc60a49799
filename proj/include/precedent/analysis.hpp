#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "precedent/corpus.hpp"
#include "precedent/error.hpp"
#include "precedent/influence.hpp"
#include "precedent/taxonomy.hpp"
#include "precedent/train.hpp"

namespace precedent {

/// Pairs the influence scores and binary labels in the same test-major order.
inline std::pair<std::vector<double>, std::vector<double>> flatten(const InfluenceMatrix& matrix,
                                                                  const LabelMatrix& labels) {
  if (matrix.n_test != labels.n_test || matrix.n_train != labels.n_train ||
      matrix.values.size() != labels.values.size())
    throw Error(ErrorCode::kShapeMismatch, "influence matrix is " + std::to_string(matrix.n_test) + "x" +
                                               std::to_string(matrix.n_train) + ", labels are " +
                                               std::to_string(labels.n_test) + "x" + std::to_string(labels.n_train));
  std::vector<double> c(labels.values.begin(), labels.values.end());
  return {matrix.values, std::move(c)};
}

/// 1-based ranks, ties sharing the mean of the ranks they span.
inline std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t m = i; m < j; ++m) ranks[order[m]] = r;
    i = j;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(std::span<const double> s, std::span<const double> c) {
  if (s.size() != c.size())
    throw Error(ErrorCode::kLengthMismatch, std::to_string(s.size()) + " scores vs " + std::to_string(c.size()) + " labels");
  if (s.size() < 2) throw Error(ErrorCode::kLengthMismatch, "spearman needs at least two pairs");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(s)) throw Error(ErrorCode::kConstantVector, "score vector is constant");
  if (constant(c)) throw Error(ErrorCode::kConstantVector, "label vector is constant");
  const auto rs = fractional_ranks(s);
  const auto rc = fractional_ranks(c);
  return pearson(rs, rc);
}

enum class PairFilter { kAll, kCorrectOnly, kModelBased };

inline std::string_view to_string(PairFilter f) {
  switch (f) {
    case PairFilter::kAll: return "all";
    case PairFilter::kCorrectOnly: return "correct-only";
    case PairFilter::kModelBased: return "model-based";
  }
  return "?";
}

inline PairFilter parse_pair_filter(std::string_view s) {
  if (s == "all") return PairFilter::kAll;
  if (s == "correct-only") return PairFilter::kCorrectOnly;
  if (s == "model-based") return PairFilter::kModelBased;
  throw Error(ErrorCode::kUnknownFlag, "unknown filter \"" + std::string(s) + "\" (valid: all, correct-only, model-based)");
}

/// Which way the influence axis points before ranking. Helpfulness is -iota,
/// so cases whose upweighting lowers the test loss rank highest.
enum class ScoreOrientation { kHelpfulness, kRaw };

inline std::string_view to_string(ScoreOrientation o) { return o == ScoreOrientation::kHelpfulness ? "helpfulness" : "raw"; }

inline ScoreOrientation parse_orientation(std::string_view s) {
  if (s == "helpfulness") return ScoreOrientation::kHelpfulness;
  if (s == "raw") return ScoreOrientation::kRaw;
  throw Error(ErrorCode::kUnknownFlag, "unknown orientation \"" + std::string(s) + "\" (valid: helpfulness, raw)");
}

/// How "correctly predicted" is judged for the correct-only filter.
enum class CorrectnessMode { kExactVector, kPerArticle };

struct CorrelationSpec {
  std::optional<PrecedentKind> kind;  // empty: overall
  Scope scope = Scope::kCited;
  Granularity granularity;
  PairFilter filter = PairFilter::kAll;

  bool operator==(const CorrelationSpec&) const = default;
};

inline std::string kind_label(const std::optional<PrecedentKind>& kind) {
  return kind ? std::string(to_string(*kind)) : std::string("overall");
}

struct CorrelationRow {
  CorrelationSpec spec;
  std::optional<double> rho;
  std::string skip_reason;
  std::size_t pairs = 0;      // M after filtering
  std::size_t positives = 0;
  std::size_t test_cases = 0;  // test cases surviving the filter
};

/// Spearman rho over the pairs of the selected test cases.
inline CorrelationRow correlate_pairs(const InfluenceMatrix& matrix, const LabelMatrix& labels,
                                      const std::vector<bool>& keep_test, ScoreOrientation orientation) {
  auto [s, c] = flatten(matrix, labels);
  if (keep_test.size() != matrix.n_test) throw Error(ErrorCode::kShapeMismatch, "test mask has wrong length");
  CorrelationRow row;
  std::vector<double> ss, cc;
  for (std::size_t t = 0; t < matrix.n_test; ++t) {
    if (!keep_test[t]) continue;
    ++row.test_cases;
    for (std::size_t i = 0; i < matrix.n_train; ++i) {
      const std::size_t f = t * matrix.n_train + i;
      ss.push_back(orientation == ScoreOrientation::kHelpfulness ? -s[f] : s[f]);
      cc.push_back(c[f]);
    }
  }
  row.pairs = ss.size();
  row.positives = static_cast<std::size_t>(std::count(cc.begin(), cc.end(), 1.0));
  if (row.test_cases == 0) {
    row.skip_reason = "no test cases pass the filter";
    return row;
  }
  try {
    row.rho = spearman(ss, cc);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kConstantVector && e.code() != ErrorCode::kLengthMismatch) throw;
    row.skip_reason = e.what();
  }
  return row;
}

/// Test cases whose decoded prediction is correct. Per-article mode checks
/// only the granularity's article, or every gold-claimed article per case.
inline std::vector<bool> correct_mask(const std::vector<OutcomeVector>& predicted, const std::vector<Case>& test,
                                      const Granularity& granularity, CorrectnessMode mode = CorrectnessMode::kExactVector) {
  if (predicted.size() != test.size())
    throw Error(ErrorCode::kMissingPrediction, std::to_string(predicted.size()) + " predictions for " +
                                                   std::to_string(test.size()) + " test cases");
  std::vector<bool> out(test.size());
  for (std::size_t t = 0; t < test.size(); ++t) {
    const auto& p = predicted[t];
    const auto& g = test[t].outcomes;
    if (mode == CorrectnessMode::kExactVector) {
      out[t] = p == g;
    } else if (granularity.article) {
      out[t] = p.at(*granularity.article) == g.at(*granularity.article);
    } else {
      bool ok = true;
      for (std::size_t k = 0; k < g.size(); ++k)
        if (g[k] != Outcome::kNull && p.at(k) != g[k]) ok = false;
      out[t] = ok;
    }
  }
  return out;
}

/// Everything `correlate` needs beyond the matrix. `labeling` is the gold
/// labeling for the spec's scope and granularity; `model_labeling` the one
/// built from predictions.
struct CorrelationInputs {
  const Labeling* labeling = nullptr;
  const Labeling* model_labeling = nullptr;
  std::optional<std::vector<bool>> correct;
  ScoreOrientation orientation = ScoreOrientation::kHelpfulness;
};

inline CorrelationRow correlate(const InfluenceMatrix& matrix, const CorrelationSpec& spec, const CorrelationInputs& in) {
  const Labeling* labeling = spec.filter == PairFilter::kModelBased ? in.model_labeling : in.labeling;
  if (!labeling)
    throw Error(spec.filter == PairFilter::kModelBased ? ErrorCode::kMissingPrediction : ErrorCode::kMissingArtifact,
                "no labeling supplied for " + kind_label(spec.kind) + "/" + std::string(to_string(spec.scope)));
  if (labeling->scope != spec.scope || !(labeling->granularity == spec.granularity))
    throw Error(ErrorCode::kShapeMismatch, "labeling does not match the correlation spec");
  std::vector<bool> keep(matrix.n_test, true);
  if (spec.filter == PairFilter::kCorrectOnly) {
    if (!in.correct) throw Error(ErrorCode::kMissingPrediction, "correct-only filter needs predictions");
    keep = *in.correct;
  }
  const LabelMatrix& labels = spec.kind ? labeling->matrix(*spec.kind) : labeling->overall;
  CorrelationRow row = correlate_pairs(matrix, labels, keep, in.orientation);
  row.spec = spec;
  return row;
}

/// Pairs restricted to test cases claiming article k, labelled at article k.
/// `claims` holds the outcomes that define claiming (gold, or predictions in
/// the model-based variant).
inline CorrelationRow per_article_correlate(const InfluenceMatrix& matrix, const Labeling& article_labeling,
                                            const std::vector<OutcomeVector>& claims, std::size_t k,
                                            std::optional<PrecedentKind> kind = std::nullopt,
                                            ScoreOrientation orientation = ScoreOrientation::kHelpfulness) {
  if (!article_labeling.granularity.article || *article_labeling.granularity.article != k)
    throw Error(ErrorCode::kShapeMismatch, "labeling is not at article " + std::to_string(k + 1));
  if (claims.size() != matrix.n_test) throw Error(ErrorCode::kShapeMismatch, "claims do not match the test split");
  std::vector<bool> keep(matrix.n_test);
  bool any = false;
  for (std::size_t t = 0; t < matrix.n_test; ++t) {
    keep[t] = claims[t].at(k) != Outcome::kNull;
    any = any || keep[t];
  }
  if (!any) throw Error(ErrorCode::kNoEligiblePairs, "no test case claims article " + std::to_string(k + 1));
  const LabelMatrix& labels = kind ? article_labeling.matrix(*kind) : article_labeling.overall;
  CorrelationRow row = correlate_pairs(matrix, labels, keep, orientation);
  row.spec = {kind, article_labeling.scope, article_labeling.granularity, PairFilter::kAll};
  return row;
}

inline nlohmann::ordered_json to_json(const CorrelationRow& r) {
  nlohmann::ordered_json j = {{"kind", kind_label(r.spec.kind)},
                              {"scope", to_string(r.spec.scope)},
                              {"granularity", to_string(r.spec.granularity)},
                              {"filter", to_string(r.spec.filter)}};
  if (r.rho) j["rho"] = *r.rho;
  else j["rho"] = nullptr;
  j["skip_reason"] = r.skip_reason;
  j["pairs"] = r.pairs;
  j["positives"] = r.positives;
  j["test_cases"] = r.test_cases;
  return j;
}

inline void write_correlation_tsv(std::ostream& os, const std::vector<CorrelationRow>& rows) {
  os << "kind\tscope\tgranularity\tfilter\trho\tpairs\tpositives\tskip_reason\n";
  char buf[32];
  for (const auto& r : rows) {
    os << kind_label(r.spec.kind) << '\t' << to_string(r.spec.scope) << '\t' << to_string(r.spec.granularity) << '\t'
       << to_string(r.spec.filter) << '\t';
    if (r.rho) {
      std::snprintf(buf, sizeof buf, "%.6f", *r.rho);
      os << buf;
    } else {
      os << "NA";
    }
    os << '\t' << r.pairs << '\t' << r.positives << '\t' << r.skip_reason << '\n';
  }
}

/// The four kinds then overall, for one scope: one model's row of the
/// correlation summary.
inline std::vector<CorrelationSpec> table_specs(Scope scope, Granularity granularity = Granularity::per_case(),
                                                PairFilter filter = PairFilter::kAll) {
  std::vector<CorrelationSpec> out;
  for (PrecedentKind k : kAllKinds) out.push_back({k, scope, granularity, filter});
  out.push_back({std::nullopt, scope, granularity, filter});
  return out;
}

struct ClassifierParams {
  double a = 0.0;  // slope
  double b = 0.0;  // intercept
  double lambda = 1e-4;
  std::size_t iterations = 0;
  bool converged = false;
};

/// sum_n [c_n log sigma(a s_n + b) + (1 - c_n) log(1 - sigma(a s_n + b))] - lambda (a^2 + b^2)
inline double classifier_objective(double a, double b, std::span<const double> s, std::span<const double> c,
                                   double lambda) {
  double ll = 0.0;
  for (std::size_t n = 0; n < s.size(); ++n) {
    const double z = a * s[n] + b;
    ll -= c[n] > 0.5 ? detail::softplus(-z) : detail::softplus(z);
  }
  return ll - lambda * (a * a + b * b);
}

/// Damped Newton ascent from (0, 0) on the penalised Bernoulli likelihood.
inline ClassifierParams fit_classifier(std::span<const double> s, std::span<const double> c, double lambda = 1e-4,
                                       std::size_t max_iter = 200) {
  if (s.size() != c.size()) throw Error(ErrorCode::kLengthMismatch, "scores and labels differ in length");
  if (!(lambda > 0.0)) throw Error(ErrorCode::kInvalidConfig, "tie-break penalty must be > 0");
  const auto pos = std::count_if(c.begin(), c.end(), [](double v) { return v > 0.5; });
  if (pos == 0 || static_cast<std::size_t>(pos) == c.size())
    throw Error(ErrorCode::kSingleClass, "labels contain a single class");
  ClassifierParams p;
  p.lambda = lambda;
  double f = classifier_objective(p.a, p.b, s, c, lambda);
  for (; p.iterations < max_iter; ++p.iterations) {
    double ga = -2.0 * lambda * p.a, gb = -2.0 * lambda * p.b;
    double haa = 2.0 * lambda, hab = 0.0, hbb = 2.0 * lambda;  // negated Hessian
    for (std::size_t n = 0; n < s.size(); ++n) {
      const double sig = detail::sigmoid(p.a * s[n] + p.b);
      const double r = (c[n] > 0.5 ? 1.0 : 0.0) - sig;
      const double w = sig * (1.0 - sig);
      ga += r * s[n];
      gb += r;
      haa += w * s[n] * s[n];
      hab += w * s[n];
      hbb += w;
    }
    if (std::hypot(ga, gb) <= 1e-8) {
      p.converged = true;
      break;
    }
    const double det = haa * hbb - hab * hab;
    double da = (hbb * ga - hab * gb) / det;
    double db = (haa * gb - hab * ga) / det;
    // Steps that lose less than rounding noise in the objective are accepted.
    const double slack = 1e-12 * (1.0 + std::abs(f));
    double step = 1.0;
    double next = classifier_objective(p.a + da, p.b + db, s, c, lambda);
    while (next < f - slack && step > 1e-12) {
      step *= 0.5;
      next = classifier_objective(p.a + step * da, p.b + step * db, s, c, lambda);
    }
    if (next < f - slack) break;
    p.a += step * da;
    p.b += step * db;
    f = next;
  }
  return p;
}

/// 1 iff a s + b >= 0, i.e. s >= -b/a for a > 0 (flipped for a < 0).
inline bool classify(const ClassifierParams& p, double s) { return p.a * s + p.b >= 0.0; }

/// Expected F1 of a predictor emitting 1 independently with probability q on
/// labels with positive rate pi (expected counts: 2 pi q / (pi + q)).
inline double random_baseline_f1(double pi, double q) { return pi + q > 0.0 ? 2.0 * pi * q / (pi + q) : 0.0; }

struct ClassifierReport {
  ClassifierParams params;
  std::optional<double> threshold;  // -b/a, empty when a == 0
  bool degenerate_threshold = false;
  F1Result f1;
  std::size_t pairs = 0;
  std::size_t positives = 0;
  double positive_rate = 0.0;
  double baseline_f1 = 0.0;        // predictor emitting 1 at the positive rate
  double always_positive_f1 = 0.0;  // predictor emitting 1 everywhere
  double gain = 0.0;
};

inline ClassifierReport classifier_report(const ClassifierParams& params, std::span<const double> s,
                                          std::span<const double> c) {
  if (s.size() != c.size()) throw Error(ErrorCode::kLengthMismatch, "scores and labels differ in length");
  ClassifierReport r;
  r.params = params;
  r.degenerate_threshold = params.a == 0.0;
  if (!r.degenerate_threshold) r.threshold = -params.b / params.a;
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t n = 0; n < s.size(); ++n) {
    const bool p = classify(params, s[n]);
    const bool g = c[n] > 0.5;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  r.f1 = detail::f1_from_counts(tp, fp, fn);
  if (r.f1.degenerate) throw Error(ErrorCode::kDegenerateF1, "no positives among predictions or labels");
  r.pairs = s.size();
  r.positives = tp + fn;
  r.positive_rate = s.empty() ? 0.0 : static_cast<double>(r.positives) / static_cast<double>(s.size());
  r.baseline_f1 = random_baseline_f1(r.positive_rate, r.positive_rate);
  r.always_positive_f1 = random_baseline_f1(r.positive_rate, 1.0);
  r.gain = r.f1.f1 - r.baseline_f1;
  return r;
}

inline nlohmann::ordered_json to_json(const ClassifierReport& r) {
  nlohmann::ordered_json j = {{"a", r.params.a}, {"b", r.params.b}, {"lambda", r.params.lambda}};
  if (r.threshold) j["threshold"] = *r.threshold;
  else j["threshold"] = nullptr;
  j["degenerate_threshold"] = r.degenerate_threshold;
  j["iterations"] = r.params.iterations;
  j["converged"] = r.params.converged;
  j["f1"] = r.f1.f1;
  j["precision"] = r.f1.precision;
  j["recall"] = r.f1.recall;
  j["pairs"] = r.pairs;
  j["positives"] = r.positives;
  j["positive_rate"] = r.positive_rate;
  j["baseline_f1"] = r.baseline_f1;
  j["always_positive_f1"] = r.always_positive_f1;
  j["gain"] = r.gain;
  j["likelihood"] = "penalised Bernoulli over both classes, penalty subtracted";
  return j;
}

}  // namespace precedent
