#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "precedent/corpus.hpp"
#include "precedent/error.hpp"

namespace precedent {

/// A citation rule: a regular expression (ECMAScript syntax) with the capture
/// groups holding the cited case's name and, optionally, its application
/// number. `number_group == 0` means the pattern carries no number.
struct CitationPattern {
  std::string pattern_id;
  std::string regex_source;
  std::size_t name_group = 1;
  std::size_t number_group = 0;
};

struct CitationMention {
  std::size_t begin = 0;  // byte offsets into the source text, [begin, end)
  std::size_t end = 0;
  std::string case_name;
  std::optional<std::string> docket;
  std::string pattern_id;

  bool operator==(const CitationMention&) const = default;
};

class CompiledPattern {
 public:
  explicit CompiledPattern(CitationPattern pattern) : pattern_(std::move(pattern)) {
    try {
      regex_ = std::regex(pattern_.regex_source, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::kInvalidPattern, "pattern \"" + pattern_.pattern_id + "\" does not compile: " + e.what());
    }
    const std::size_t groups = regex_.mark_count();
    if (pattern_.name_group == 0 || pattern_.name_group > groups)
      throw Error(ErrorCode::kInvalidPattern, "pattern \"" + pattern_.pattern_id + "\" has no capture group " +
                                                  std::to_string(pattern_.name_group) + " for the case name");
    if (pattern_.number_group > groups)
      throw Error(ErrorCode::kInvalidPattern, "pattern \"" + pattern_.pattern_id + "\" has no capture group " +
                                                  std::to_string(pattern_.number_group) + " for the number");
  }

  const CitationPattern& pattern() const { return pattern_; }
  const std::regex& regex() const { return regex_; }

 private:
  CitationPattern pattern_;
  std::regex regex_;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline CitationMention make_mention(const std::smatch& m, std::size_t offset, const CitationPattern& p) {
  CitationMention mention;
  mention.begin = offset + static_cast<std::size_t>(m.position(0));
  mention.end = mention.begin + static_cast<std::size_t>(m.length(0));
  mention.case_name = trim(m[p.name_group].str());
  if (p.number_group != 0 && m[p.number_group].matched) mention.docket = trim(m[p.number_group].str());
  mention.pattern_id = p.pattern_id;
  return mention;
}

/// Picks non-overlapping candidates: earliest start, then longest, then
/// lowest pattern id.
inline std::vector<CitationMention> select_non_overlapping(std::vector<CitationMention> candidates) {
  std::sort(candidates.begin(), candidates.end(), [](const CitationMention& a, const CitationMention& b) {
    if (a.begin != b.begin) return a.begin < b.begin;
    if (a.end != b.end) return a.end > b.end;
    return a.pattern_id < b.pattern_id;
  });
  std::vector<CitationMention> out;
  std::size_t frontier = 0;
  for (auto& c : candidates) {
    if (!out.empty() && c.begin < frontier) continue;
    frontier = c.end;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace detail

inline std::vector<CompiledPattern> compile_patterns(const std::vector<CitationPattern>& patterns) {
  std::vector<CompiledPattern> out;
  out.reserve(patterns.size());
  for (const auto& p : patterns) out.emplace_back(p);
  return out;
}

inline std::vector<CitationMention> extract_mentions(const std::string& text, const std::vector<CompiledPattern>& patterns) {
  if (patterns.empty()) throw Error(ErrorCode::kInvalidPattern, "no citation patterns supplied");
  std::vector<CitationMention> candidates;
  for (const auto& compiled : patterns) {
    for (auto it = std::sregex_iterator(text.begin(), text.end(), compiled.regex()); it != std::sregex_iterator(); ++it) {
      if ((*it).length(0) == 0) continue;
      auto mention = detail::make_mention(*it, 0, compiled.pattern());
      if (!mention.case_name.empty()) candidates.push_back(std::move(mention));
    }
  }
  return detail::select_non_overlapping(std::move(candidates));
}

inline std::vector<CitationMention> extract_mentions(const std::string& text, const std::vector<CitationPattern>& patterns) {
  return extract_mentions(text, compile_patterns(patterns));
}

/// Two rules modelled on the court's citation styles: the 1999-2015 form
/// "Name v. State [GC], no. 12345/99, § 45, ECHR 2005-I" (report reference
/// optional) and the 2016+ form, which ends in a delivery date instead.
inline std::vector<CitationPattern> default_citation_patterns() {
  const std::string name =
      R"(((?:[A-Z][\w'\-]*\.?\s+)(?:(?:[A-Z][\w'\-]*\.?|and|of|de|van|von|the)\s+)*v\.\s+(?:the\s+)?[A-Z][\w'\-]*(?:\s+(?:and\s+|of\s+)?[A-Z][\w'\-]*)*))";
  const std::string lead = R"((?:(?:See|see|Cf\.|cf\.|In|also|and)\s+)?)";
  const std::string docket = R"((?:\s+\[(?:GC|dec\.)\])?,\s+nos?\.\s+(\d+/\d{2}))";
  const std::string paragraph = R"((?:,\s+(?:§){1,2}\s*\d+(?:(?:-|–)\d+)?)?)";
  const std::string months = "(?:January|February|March|April|May|June|July|August|September|October|November|December)";
  return {
      {"echr-1999-2015", lead + name + docket + paragraph + R"((?:,\s+ECHR\s+\d{4}(?:-[IVX]+)?)?)", 1, 2},
      {"echr-2016", lead + name + docket + paragraph + R"(,\s+\d{1,2}\s+)" + months + R"(\s+\d{4})", 1, 2},
  };
}

inline std::vector<CitationPattern> load_patterns(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::kParse, path + ": pattern config must be a JSON list");
  std::vector<CitationPattern> out;
  for (const auto& entry : doc) {
    try {
      CitationPattern p;
      p.pattern_id = entry.at("pattern_id").get<std::string>();
      p.regex_source = entry.at("regex_source").get<std::string>();
      p.name_group = entry.at("name_group").get<std::size_t>();
      p.number_group = entry.value("number_group", std::size_t{0});
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, path + ": " + e.what());
    }
  }
  compile_patterns(out);
  return out;
}

inline nlohmann::ordered_json patterns_to_json(const std::vector<CitationPattern>& patterns) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& p : patterns)
    out.push_back({{"pattern_id", p.pattern_id}, {"regex_source", p.regex_source},
                   {"name_group", p.name_group}, {"number_group", p.number_group}});
  return out;
}

/// Lower-case, punctuation stripped, whitespace collapsed.
inline std::string normalize_case_name(std::string_view name) {
  std::string out;
  bool pending_space = false;
  for (unsigned char ch : name) {
    if (std::isalnum(ch)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(ch)));
    } else if (std::isspace(ch)) {
      pending_space = true;
    }
  }
  return out;
}

struct CaseRegistry {
  std::map<std::string, std::vector<std::string>> by_docket;
  std::map<std::string, std::vector<std::string>> by_name;

  void add(const std::string& id, const std::optional<std::string>& name, const std::optional<std::string>& docket) {
    if (docket && !detail::trim(*docket).empty()) by_docket[detail::trim(*docket)].push_back(id);
    if (name) {
      auto key = normalize_case_name(*name);
      if (!key.empty()) by_name[key].push_back(id);
    }
  }
};

inline CaseRegistry build_registry(const Corpus& corpus) {
  CaseRegistry registry;
  corpus.for_each_case([&](const Case& c, Split) { registry.add(c.id, c.name, c.docket); });
  return registry;
}

enum class UnresolvedReason { kNoMatch, kAmbiguousName };

constexpr std::string_view to_string(UnresolvedReason r) {
  return r == UnresolvedReason::kNoMatch ? "no_match" : "ambiguous_name";
}

struct UnresolvedMention {
  std::string citing_id;
  CitationMention mention;
  UnresolvedReason reason = UnresolvedReason::kNoMatch;
};

struct ResolveResult {
  std::vector<std::pair<CitationMention, std::string>> resolved;
  std::vector<UnresolvedMention> unresolved;
};

/// Exact docket match wins; otherwise a unique normalised-name match; anything
/// else is returned unresolved with a reason.
inline ResolveResult resolve(const std::vector<CitationMention>& mentions, const CaseRegistry& registry,
                             const std::string& citing_id = {}) {
  ResolveResult result;
  for (const auto& m : mentions) {
    if (m.docket) {
      if (auto it = registry.by_docket.find(*m.docket); it != registry.by_docket.end() && it->second.size() == 1) {
        result.resolved.emplace_back(m, it->second.front());
        continue;
      }
    }
    auto it = registry.by_name.find(normalize_case_name(m.case_name));
    if (it == registry.by_name.end()) {
      result.unresolved.push_back({citing_id, m, UnresolvedReason::kNoMatch});
    } else if (it->second.size() > 1) {
      result.unresolved.push_back({citing_id, m, UnresolvedReason::kAmbiguousName});
    } else {
      result.resolved.emplace_back(m, it->second.front());
    }
  }
  return result;
}

struct CitationNetwork {
  std::map<std::string, std::set<std::string>> edges;  // citing -> cited
  std::vector<UnresolvedMention> unresolved;
  // Explicit `cites` entries naming ids that are not in the corpus.
  std::vector<std::pair<std::string, std::string>> dangling;
  std::size_t self_citations_dropped = 0;

  bool has_edge(const std::string& citing, const std::string& cited) const {
    auto it = edges.find(citing);
    return it != edges.end() && it->second.count(cited) > 0;
  }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& [_, targets] : edges) n += targets.size();
    return n;
  }

  bool operator==(const CitationNetwork& other) const {
    return edges == other.edges && dangling == other.dangling &&
           self_citations_dropped == other.self_citations_dropped && unresolved.size() == other.unresolved.size();
  }
};

/// Union of text-extracted (resolved) citations and explicit `cites`, with
/// self-citations and ids outside the corpus dropped.
inline CitationNetwork build_network(const Corpus& corpus, const std::vector<CompiledPattern>& patterns,
                                     const CaseRegistry& registry) {
  CitationNetwork network;
  auto add_edge = [&](const std::string& citing, const std::string& cited) {
    if (citing == cited) {
      ++network.self_citations_dropped;
      return;
    }
    network.edges[citing].insert(cited);
  };
  corpus.for_each_case([&](const Case& c, Split) {
    if (c.arguments_text && !c.arguments_text->empty() && !patterns.empty()) {
      auto result = resolve(extract_mentions(*c.arguments_text, patterns), registry, c.id);
      for (const auto& [_, cited] : result.resolved) add_edge(c.id, cited);
      for (auto& u : result.unresolved) network.unresolved.push_back(std::move(u));
    }
    for (const auto& cited : c.cites) {
      if (corpus.find(cited) == nullptr) {
        network.dangling.emplace_back(c.id, cited);
        continue;
      }
      add_edge(c.id, cited);
    }
  });
  return network;
}

inline CitationNetwork build_network(const Corpus& corpus, const std::vector<CitationPattern>& patterns) {
  return build_network(corpus, compile_patterns(patterns), build_registry(corpus));
}

/// Network from the explicit `cites` fields only.
inline CitationNetwork explicit_network(const Corpus& corpus) {
  return build_network(corpus, std::vector<CompiledPattern>{}, CaseRegistry{});
}

inline void write_network_tsv(std::ostream& out, const CitationNetwork& network) {
  for (const auto& [citing, targets] : network.edges)
    for (const auto& cited : targets) out << citing << '\t' << cited << '\n';
}

inline CitationNetwork read_network_tsv(std::istream& in) {
  CitationNetwork network;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw Error(ErrorCode::kParse, "network line " + std::to_string(line_no) + ": expected citing<TAB>cited");
    std::string citing = line.substr(0, tab);
    std::string cited = line.substr(tab + 1);
    if (!cited.empty() && cited.back() == '\r') cited.pop_back();
    if (citing == cited) {
      ++network.self_citations_dropped;
      continue;
    }
    network.edges[citing].insert(cited);
  }
  return network;
}

}  // namespace precedent
