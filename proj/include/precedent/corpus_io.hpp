#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "precedent/corpus.hpp"
#include "precedent/error.hpp"

namespace precedent {

inline constexpr std::string_view kCorpusSchema = "jsonl";

using EmbeddingStore = std::map<std::string, std::vector<double>, std::less<>>;

namespace detail {

inline nlohmann::json parse_json_line(const std::string& line, std::size_t line_no, const std::string& path) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, path + ":" + std::to_string(line_no) + ": " + e.what());
  }
}

template <typename T>
T require(const nlohmann::json& obj, const char* key, std::size_t line_no) {
  if (!obj.contains(key))
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": missing \"" + key + "\"");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": field \"" + key + "\": " + e.what());
  }
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& obj, const char* key, std::size_t line_no) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return require<T>(obj, key, line_no);
}

inline Case case_from_json(const nlohmann::json& obj, std::size_t line_no) {
  if (!obj.is_object()) throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": not an object");
  Case c;
  c.id = require<std::string>(obj, "id", line_no);
  c.facts_text = optional_field<std::string>(obj, "facts_text", line_no);
  c.embedding = optional_field<std::vector<double>>(obj, "embedding", line_no);
  for (const std::string& symbol : require<std::vector<std::string>>(obj, "outcomes", line_no)) {
    try {
      c.outcomes.push_back(parse_outcome(symbol));
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (obj.contains("cites")) {
    for (std::string& cited : require<std::vector<std::string>>(obj, "cites", line_no)) {
      if (std::find(c.cites.begin(), c.cites.end(), cited) == c.cites.end()) c.cites.push_back(std::move(cited));
    }
  }
  c.date = optional_field<std::string>(obj, "date", line_no);
  c.name = optional_field<std::string>(obj, "name", line_no);
  c.docket = optional_field<std::string>(obj, "docket", line_no);
  c.arguments_text = optional_field<std::string>(obj, "arguments_text", line_no);
  return c;
}

}  // namespace detail

inline nlohmann::ordered_json case_to_json(const Case& c, Split split) {
  nlohmann::ordered_json obj;
  obj["id"] = c.id;
  obj["split"] = std::string(to_string(split));
  if (c.facts_text) obj["facts_text"] = *c.facts_text;
  if (c.embedding) obj["embedding"] = *c.embedding;
  auto& outcomes = obj["outcomes"] = nlohmann::ordered_json::array();
  for (Outcome o : c.outcomes) outcomes.push_back(std::string(1, outcome_symbol(o)));
  obj["cites"] = c.cites;
  if (c.date) obj["date"] = *c.date;
  if (c.name) obj["name"] = *c.name;
  if (c.docket) obj["docket"] = *c.docket;
  if (c.arguments_text) obj["arguments_text"] = *c.arguments_text;
  return obj;
}

/// Parses the JSON-lines corpus format from a stream. The first non-empty
/// line is the header; every following line is one case.
inline Corpus read_corpus(std::istream& in, const std::string& source = "<stream>",
                          const ValidationOptions& options = {}) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj = detail::parse_json_line(line, line_no, source);
    if (!have_header) {
      if (!obj.is_object() || !obj.contains("num_articles"))
        throw Error(ErrorCode::kParse, source + ":" + std::to_string(line_no) + ": header must carry num_articles");
      const auto k = detail::require<std::int64_t>(obj, "num_articles", line_no);
      if (k < 1) throw Error(ErrorCode::kSchema, "num_articles must be >= 1");
      corpus.num_articles = static_cast<std::size_t>(k);
      if (obj.contains("article_names"))
        corpus.article_names = detail::require<std::vector<std::string>>(obj, "article_names", line_no);
      have_header = true;
      continue;
    }
    const Split split = [&] {
      const auto name = detail::require<std::string>(obj, "split", line_no);
      try {
        return parse_split(name);
      } catch (const Error& e) {
        throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + e.what());
      }
    }();
    corpus.split(split).push_back(detail::case_from_json(obj, line_no));
  }
  if (!have_header) throw Error(ErrorCode::kParse, source + ": empty corpus file");
  validate(corpus, options);
  return corpus;
}

inline Corpus load_corpus(const std::string& path, std::string_view schema = kCorpusSchema,
                          const ValidationOptions& options = {}) {
  if (schema != kCorpusSchema) throw Error(ErrorCode::kParse, "unsupported corpus schema \"" + std::string(schema) + "\"");
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_corpus(in, path, options);
}

/// Writes the header then train, validation and test cases in order.
/// Extra header fields (e.g. provenance stamps) may be passed in `header_extra`.
inline void write_corpus(std::ostream& out, const Corpus& corpus,
                         const nlohmann::ordered_json& header_extra = nlohmann::ordered_json::object()) {
  nlohmann::ordered_json header;
  header["num_articles"] = corpus.num_articles;
  header["article_names"] = corpus.article_names;
  for (const auto& [key, value] : header_extra.items()) header[key] = value;
  out << header.dump() << '\n';
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest})
    for (const Case& c : corpus.split(s)) out << case_to_json(c, s).dump() << '\n';
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream out;
  write_corpus(out, corpus);
  return out.str();
}

/// Sidecar embeddings: one {"id", "embedding"} object per line.
inline EmbeddingStore load_embedding_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  EmbeddingStore store;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj = detail::parse_json_line(line, line_no, path);
    auto id = detail::require<std::string>(obj, "id", line_no);
    auto vec = detail::require<std::vector<double>>(obj, "embedding", line_no);
    if (!dim) dim = vec.size();
    if (vec.size() != *dim)
      throw Error(ErrorCode::kDanglingEmbedding, path + ":" + std::to_string(line_no) + ": embedding dimension " +
                                                     std::to_string(vec.size()) + ", expected " + std::to_string(*dim));
    store.insert_or_assign(std::move(id), std::move(vec));
  }
  return store;
}

}  // namespace precedent
