#pragma once

#include <cctype>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "precedent/corpus.hpp"
#include "precedent/corpus_io.hpp"
#include "precedent/error.hpp"
#include "precedent/rng.hpp"

namespace precedent {

/// Stand-in for a learned fact encoder: unigram and bigram counts hashed
/// into `dim` buckets, then L2-normalised.
struct HashingEncoderConfig {
  std::size_t dim = 64;
  std::uint64_t salt = 0;
};

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::vector<double> hash_encode(std::string_view text, const HashingEncoderConfig& config) {
  if (config.dim == 0) throw Error(ErrorCode::kInvalidConfig, "hashing encoder dimension must be positive");
  const auto tokens = tokenize(text);
  std::vector<double> out(config.dim, 0.0);
  if (tokens.empty()) return out;
  const std::uint64_t seed = fnv1a(std::to_string(config.salt));
  auto bump = [&](const std::string& feature) { out[fnv1a(feature, seed) % config.dim] += 1.0; };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    bump(tokens[i]);
    if (i + 1 < tokens.size()) bump(tokens[i] + ' ' + tokens[i + 1]);
  }
  double norm = 0.0;
  for (double v : out) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : out) v /= norm;
  return out;
}

/// Representation of a case: its own embedding, else the store entry, else
/// the hashing encoding of its facts.
inline std::vector<double> embed(const Case& c, const EmbeddingStore& store, const HashingEncoderConfig& fallback) {
  if (c.embedding) return *c.embedding;
  if (auto it = store.find(c.id); it != store.end()) return it->second;
  if (c.facts_text && !tokenize(*c.facts_text).empty()) return hash_encode(*c.facts_text, fallback);
  throw Error(ErrorCode::kNoRepresentation, "case \"" + c.id + "\" has no embedding and no usable facts_text");
}

/// Fills in every missing embedding so that downstream stages see a uniform
/// dense representation.
inline Corpus with_embeddings(Corpus corpus, const EmbeddingStore& store, const HashingEncoderConfig& fallback) {
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest})
    for (Case& c : corpus.split(s)) c.embedding = embed(c, store, fallback);
  validate(corpus);
  return corpus;
}

}  // namespace precedent
