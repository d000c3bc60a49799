#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "precedent/citegraph.hpp"
#include "precedent/corpus.hpp"
#include "precedent/model.hpp"
#include "precedent/rng.hpp"
#include "precedent/train.hpp"

namespace precedent::testing {

inline Case make_case(const std::string& id, const std::string& outcomes, std::vector<std::string> cites = {},
                      std::vector<double> embedding = {0.0}) {
  Case c;
  c.id = id;
  c.outcomes = parse_outcomes(outcomes);
  c.cites = std::move(cites);
  c.embedding = std::move(embedding);
  return c;
}

inline OutcomeVector random_outcomes(Rng& rng, std::size_t k) {
  OutcomeVector o(k);
  for (auto& v : o) v = static_cast<Outcome>(rng.below(3));
  return o;
}

/// Random citation structure: every case cites each train/test case with
/// probability `p`.
inline Corpus random_corpus(Rng& rng, std::size_t n_train, std::size_t n_test, std::size_t n_val, std::size_t k,
                            double p) {
  Corpus corpus;
  corpus.num_articles = k;
  auto add = [&](std::vector<Case>& split, const std::string& prefix, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      Case c;
      c.id = prefix + std::to_string(i);
      c.outcomes = random_outcomes(rng, k);
      c.embedding = std::vector<double>{rng.normal(), rng.normal()};
      split.push_back(std::move(c));
    }
  };
  add(corpus.train, "tr", n_train);
  add(corpus.test, "te", n_test);
  add(corpus.validation, "va", n_val);
  std::vector<std::string> targets;
  for (const auto& c : corpus.train) targets.push_back(c.id);
  for (const auto& c : corpus.test) targets.push_back(c.id);
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest})
    for (Case& c : corpus.split(s))
      for (const auto& t : targets)
        if (t != c.id && rng.bernoulli(p)) c.cites.push_back(t);
  return corpus;
}

/// Random instances with a linear signal, for the convex (linear head) model.
inline Dataset random_dataset(Rng& rng, std::size_t n, std::size_t d1, std::size_t k, double noise = 0.5) {
  std::vector<double> w(d1 * k);
  for (double& v : w) v = rng.normal();
  Dataset out;
  for (std::size_t i = 0; i < n; ++i) {
    Instance inst;
    inst.x.resize(d1);
    for (double& v : inst.x) v = rng.normal() / std::sqrt(static_cast<double>(d1));
    inst.y.resize(k);
    for (std::size_t a = 0; a < k; ++a) {
      double z = noise * rng.normal();
      for (std::size_t j = 0; j < d1; ++j) z += w[a * d1 + j] * inst.x[j];
      const double u = rng.uniform();
      inst.y[a] = u < 0.2 ? Outcome::kNull : z > 0 ? Outcome::kPositive : Outcome::kNegative;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

/// Fresh directory under the system temp dir, removed on destruction.
struct ScratchDir {
  std::filesystem::path path;
  explicit ScratchDir(const std::string& name) : path(std::filesystem::temp_directory_path() / ("precedent-" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace precedent::testing
