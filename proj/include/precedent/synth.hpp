#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "precedent/corpus.hpp"
#include "precedent/error.hpp"
#include "precedent/rng.hpp"
#include "precedent/taxonomy.hpp"

namespace precedent {

struct SynthConfig {
  std::size_t num_articles = 4;
  std::size_t n_train = 200;
  std::size_t n_validation = 0;
  std::size_t n_test = 40;
  std::size_t d1 = 16;
  std::uint64_t seed = 0;
  double claim_rate = 0.5;
  double positive_rate = 0.5;
  std::size_t cite_per_test = 3;
  double applied_bias = 0.9;
  double noise_sigma = 0.1;
  double signal_scale = 1.0;  // length of each prototype direction
  bool emit_text = false;      // names, dockets and argument text with written citations
  std::size_t max_retries = 100;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); };
    if (num_articles == 0) fail("K must be >= 1");
    if (n_train == 0 || n_test == 0) fail("n_train and n_test must be >= 1");
    if (d1 < num_articles + 1) fail("d1 must be >= K + 1");
    if (!(claim_rate > 0.0 && claim_rate <= 1.0)) fail("claim_rate must be in (0, 1]");
    if (!(positive_rate > 0.0 && positive_rate < 1.0)) fail("positive_rate must be in (0, 1)");
    if (cite_per_test == 0) fail("cite_per_test must be >= 1");
    if (cite_per_test > n_train) fail("cite_per_test must not exceed n_train");
    if (!(applied_bias >= 0.0 && applied_bias <= 1.0)) fail("applied_bias must be in [0, 1]");
    if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
    if (!(signal_scale > 0.0)) fail("signal_scale must be > 0");
  }

  bool operator==(const SynthConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const SynthConfig& c) {
  return {{"num_articles", c.num_articles}, {"n_train", c.n_train},
          {"n_validation", c.n_validation}, {"n_test", c.n_test},
          {"d1", c.d1},                     {"seed", c.seed},
          {"claim_rate", c.claim_rate},     {"positive_rate", c.positive_rate},
          {"cite_per_test", c.cite_per_test}, {"applied_bias", c.applied_bias},
          {"noise_sigma", c.noise_sigma},   {"signal_scale", c.signal_scale},
          {"emit_text", c.emit_text},       {"max_retries", c.max_retries}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.num_articles = j.value("num_articles", c.num_articles);
    c.n_train = j.value("n_train", c.n_train);
    c.n_validation = j.value("n_validation", c.n_validation);
    c.n_test = j.value("n_test", c.n_test);
    c.d1 = j.value("d1", c.d1);
    c.seed = j.value("seed", c.seed);
    c.claim_rate = j.value("claim_rate", c.claim_rate);
    c.positive_rate = j.value("positive_rate", c.positive_rate);
    c.cite_per_test = j.value("cite_per_test", c.cite_per_test);
    c.applied_bias = j.value("applied_bias", c.applied_bias);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.signal_scale = j.value("signal_scale", c.signal_scale);
    c.emit_text = j.value("emit_text", c.emit_text);
    c.max_retries = j.value("max_retries", c.max_retries);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

struct SynthResult {
  Corpus corpus;
  std::vector<PrecedentRelation> relations;  // cited scope, per case
};

/// How a training case relates to a test case over their shared claims.
enum class PartnerClass { kNone, kApplied, kDistinguished, kMixed };

inline PartnerClass partner_class(const OutcomeVector& citing, const OutcomeVector& cited) {
  bool shared = false, agree = false, disagree = false;
  for (std::size_t k = 0; k < citing.size(); ++k) {
    if (citing[k] == Outcome::kNull || cited[k] == Outcome::kNull) continue;
    shared = true;
    (citing[k] == cited[k] ? agree : disagree) = true;
  }
  if (!shared) return PartnerClass::kNone;
  if (agree && disagree) return PartnerClass::kMixed;
  return agree ? PartnerClass::kApplied : PartnerClass::kDistinguished;
}

namespace detail {

class SynthGenerator {
 public:
  explicit SynthGenerator(const SynthConfig& config) : config_(config), rng_(config.seed) {
    config_.validate();
    make_prototypes();
  }

  SynthResult run() {
    Corpus& corpus = result_.corpus;
    corpus.num_articles = config_.num_articles;
    for (std::size_t k = 0; k < config_.num_articles; ++k) corpus.article_names.push_back("Article " + std::to_string(k + 1));
    corpus.train = make_cases("train", config_.n_train);
    corpus.validation = make_cases("val", config_.n_validation);
    corpus.test = make_cases("test", config_.n_test);
    for (std::size_t t = 0; t < corpus.test.size(); ++t) cite_for_test(t);
    cover_training_cases();
    if (config_.emit_text) write_text();
    record_relations();
    return std::move(result_);
  }

 private:
  void make_prototypes() {
    const std::size_t count = config_.num_articles + 1;
    prototypes_.assign(count, std::vector<double>(config_.d1, 0.0));
    for (std::size_t p = 0; p < count; ++p) {
      auto& v = prototypes_[p];
      for (;;) {
        for (double& x : v) x = rng_.normal();
        for (std::size_t q = 0; q < p; ++q) {
          double d = 0.0;
          for (std::size_t i = 0; i < v.size(); ++i) d += v[i] * prototypes_[q][i];
          for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * prototypes_[q][i];
        }
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n > 1e-8) {
          for (double& x : v) x /= n;
          break;
        }
      }
    }
  }

  OutcomeVector draw_outcomes() {
    OutcomeVector y(config_.num_articles, Outcome::kNull);
    bool any = false;
    for (auto& o : y) {
      if (!rng_.bernoulli(config_.claim_rate)) continue;
      o = rng_.bernoulli(config_.positive_rate) ? Outcome::kPositive : Outcome::kNegative;
      any = true;
    }
    if (!any)
      y[rng_.below(y.size())] = rng_.bernoulli(config_.positive_rate) ? Outcome::kPositive : Outcome::kNegative;
    return y;
  }

  /// Intercept direction plus the mean of the claimed articles' directions,
  /// each signed by its outcome, plus isotropic noise.
  std::vector<double> embed(const OutcomeVector& y) {
    std::vector<double> x = prototypes_[0];
    const auto claimed = claimed_articles(y);
    const double w = config_.signal_scale / static_cast<double>(claimed.size());
    for (std::size_t k : claimed) {
      const double sign = y[k] == Outcome::kPositive ? 1.0 : -1.0;
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += sign * w * prototypes_[k + 1][i];
    }
    if (config_.noise_sigma > 0.0)
      for (double& xi : x) xi += config_.noise_sigma * rng_.normal();
    return x;
  }

  void redraw(Case& c) {
    c.outcomes = draw_outcomes();
    c.embedding = embed(c.outcomes);
  }

  std::vector<Case> make_cases(const std::string& prefix, std::size_t n) {
    std::vector<Case> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s-%04zu", prefix.c_str(), i + 1);
      out[i].id = id;
      redraw(out[i]);
    }
    return out;
  }

  /// Pure-class pick: applied with probability applied_bias, falling back to
  /// the other pure class only if it can occur at all.
  std::optional<PartnerClass> pick_class(bool have_applied, bool have_distinguished) {
    const bool want_applied = rng_.bernoulli(config_.applied_bias);
    if (want_applied && have_applied) return PartnerClass::kApplied;
    if (!want_applied && have_distinguished) return PartnerClass::kDistinguished;
    if (want_applied && have_distinguished && config_.applied_bias < 1.0) return PartnerClass::kDistinguished;
    if (!want_applied && have_applied && config_.applied_bias > 0.0) return PartnerClass::kApplied;
    return std::nullopt;
  }

  void cite_for_test(std::size_t t) {
    auto& corpus = result_.corpus;
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
      Case& test = corpus.test[t];
      test.cites.clear();
      std::vector<bool> used(corpus.train.size(), false);
      bool ok = true;
      for (std::size_t slot = 0; slot < config_.cite_per_test && ok; ++slot) {
        std::vector<std::size_t> applied, distinguished;
        for (std::size_t j = 0; j < corpus.train.size(); ++j) {
          if (used[j]) continue;
          const auto cls = partner_class(test.outcomes, corpus.train[j].outcomes);
          if (cls == PartnerClass::kApplied) applied.push_back(j);
          if (cls == PartnerClass::kDistinguished) distinguished.push_back(j);
        }
        const auto cls = pick_class(!applied.empty(), !distinguished.empty());
        if (!cls) {
          ok = false;
          break;
        }
        const auto& pool = *cls == PartnerClass::kApplied ? applied : distinguished;
        const std::size_t j = pool[rng_.below(pool.size())];
        used[j] = true;
        test.cites.push_back(corpus.train[j].id);
      }
      if (ok) return;
      redraw(test);
    }
    throw Error(ErrorCode::kInfeasibleCitation, "no admissible citation partners for \"" + corpus.test[t].id + "\"");
  }

  /// Every training case ends up cited by some test case, so precedent
  /// filtering keeps the whole corpus.
  void cover_training_cases() {
    auto& corpus = result_.corpus;
    std::vector<bool> cited(corpus.train.size(), false);
    std::map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < corpus.train.size(); ++j) index.emplace(corpus.train[j].id, j);
    for (const auto& t : corpus.test)
      for (const auto& id : t.cites) cited[index.at(id)] = true;
    for (std::size_t j = 0; j < corpus.train.size(); ++j) {
      if (cited[j]) continue;
      bool done = false;
      for (std::size_t attempt = 0; attempt <= config_.max_retries && !done; ++attempt) {
        std::vector<std::size_t> applied, distinguished;
        for (std::size_t t = 0; t < corpus.test.size(); ++t) {
          const auto cls = partner_class(corpus.test[t].outcomes, corpus.train[j].outcomes);
          if (cls == PartnerClass::kApplied) applied.push_back(t);
          if (cls == PartnerClass::kDistinguished) distinguished.push_back(t);
        }
        if (const auto cls = pick_class(!applied.empty(), !distinguished.empty())) {
          const auto& pool = *cls == PartnerClass::kApplied ? applied : distinguished;
          corpus.test[pool[rng_.below(pool.size())]].cites.push_back(corpus.train[j].id);
          done = true;
        } else {
          redraw(corpus.train[j]);
        }
      }
      if (!done)
        throw Error(ErrorCode::kInfeasibleCitation, "no test case can cite \"" + corpus.train[j].id + "\"");
    }
  }

  static std::string surname(std::size_t i) {
    static const char* const kSyllables[] = {"ka", "lo", "mi", "ne", "ro", "sa", "tu", "vi",
                                             "da", "be", "zo", "ha", "pe", "gu", "fi", "ya"};
    std::string s;
    std::size_t n = i;
    for (int d = 0; d < 3; ++d) {
      s += kSyllables[n % 16];
      n /= 16;
    }
    while (n > 0) {
      s += kSyllables[n % 16];
      n /= 16;
    }
    s += "vic";
    s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
  }

  void write_text() {
    static const char* const kStates[] = {"Ruritania", "Freedonia", "Latveria", "Genovia", "Elbonia", "Sokovia"};
    auto& corpus = result_.corpus;
    std::size_t serial = 0;
    std::map<std::string, const Case*> by_id;
    for (auto* split : {&corpus.train, &corpus.validation, &corpus.test}) {
      for (auto& c : *split) {
        c.name = surname(serial) + " v. " + kStates[rng_.below(std::size(kStates))];
        char docket[16];
        std::snprintf(docket, sizeof docket, "%05zu/%02zu", 10000 + serial * 7 % 90000, 1 + rng_.below(15));
        c.docket = docket;
        ++serial;
        by_id.emplace(c.id, &c);
      }
    }
    for (auto& c : corpus.test) {
      std::string text = "The applicant complained under the Convention.";
      for (const auto& id : c.cites) {
        const Case* cited = by_id.at(id);
        text += " See " + *cited->name + ", no. " + *cited->docket + ", § " + std::to_string(10 + rng_.below(90)) + ".";
      }
      c.arguments_text = text;
    }
  }

  void record_relations() {
    const auto& corpus = result_.corpus;
    std::map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < corpus.train.size(); ++j) index.emplace(corpus.train[j].id, j);
    for (std::size_t t = 0; t < corpus.test.size(); ++t) {
      std::vector<std::size_t> cited;
      for (const auto& id : corpus.test[t].cites) cited.push_back(index.at(id));
      std::sort(cited.begin(), cited.end());
      for (std::size_t j : cited) {
        const auto& a = corpus.test[t].outcomes;
        const auto& b = corpus.train[j].outcomes;
        std::array<std::vector<std::size_t>, 4> articles;
        for (std::size_t k = 0; k < a.size(); ++k) {
          if (a[k] == Outcome::kNull || b[k] == Outcome::kNull) continue;
          PrecedentKind kind;
          if (a[k] == b[k]) kind = a[k] == Outcome::kPositive ? PrecedentKind::kAppliedPositive : PrecedentKind::kAppliedNegative;
          else kind = b[k] == Outcome::kPositive ? PrecedentKind::kDistinguishedPositive : PrecedentKind::kDistinguishedNegative;
          articles[static_cast<std::size_t>(kind)].push_back(k);
        }
        for (PrecedentKind kind : kAllKinds) {
          auto& arts = articles[static_cast<std::size_t>(kind)];
          if (!arts.empty())
            result_.relations.push_back({corpus.train[j].id, corpus.test[t].id, j, t, kind, Scope::kCited, arts});
        }
      }
    }
  }

  SynthConfig config_;
  Rng rng_;
  std::vector<std::vector<double>> prototypes_;
  SynthResult result_;
};

}  // namespace detail

/// Seeded corpus whose embeddings encode outcomes and whose test cases cite
/// training cases with planted applied/distinguished structure.
inline SynthResult generate(const SynthConfig& config) { return detail::SynthGenerator(config).run(); }

}  // namespace precedent
