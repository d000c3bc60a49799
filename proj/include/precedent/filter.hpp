#pragma once

#include <deque>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "precedent/citegraph.hpp"
#include "precedent/corpus.hpp"
#include "precedent/error.hpp"

namespace precedent {

enum class CitedBy {
  kAnySplit,  // a training case survives if any surviving case cites it
  kTestOnly,  // ... only if a surviving test case cites it
};

/// Removes training cases nobody cites and test cases that cite no training
/// case, repeating until neither rule removes anything. Validation is left
/// untouched; surviving cases keep all their fields.
inline Corpus filter_for_precedent(const Corpus& corpus, const CitationNetwork& network,
                                   CitedBy mode = CitedBy::kAnySplit) {
  // Node ids: train [0, T), test [T, T + S), validation after that.
  const std::size_t n_train = corpus.train.size();
  const std::size_t n_test = corpus.test.size();
  std::unordered_map<std::string, std::size_t> node;
  for (std::size_t i = 0; i < n_train; ++i) node.emplace(corpus.train[i].id, i);
  for (std::size_t i = 0; i < n_test; ++i) node.emplace(corpus.test[i].id, n_train + i);
  for (std::size_t i = 0; i < corpus.validation.size(); ++i) node.emplace(corpus.validation[i].id, n_train + n_test + i);
  const std::size_t n_nodes = n_train + n_test + corpus.validation.size();
  auto is_train = [&](std::size_t v) { return v < n_train; };
  auto is_test = [&](std::size_t v) { return v >= n_train && v < n_train + n_test; };

  // support[train] = live citers that count; support[test] = live cited train cases.
  std::vector<std::vector<std::size_t>> out_edges(n_nodes);
  std::vector<std::size_t> support(n_nodes, 0);
  for (const auto& [citing, targets] : network.edges) {
    auto from = node.find(citing);
    if (from == node.end()) continue;
    for (const auto& cited : targets) {
      auto to = node.find(cited);
      if (to == node.end() || to->second == from->second) continue;
      out_edges[from->second].push_back(to->second);
      if (is_train(to->second) && (mode == CitedBy::kAnySplit || is_test(from->second))) ++support[to->second];
      if (is_test(from->second) && is_train(to->second)) ++support[from->second];
    }
  }
  std::vector<std::vector<std::size_t>> in_edges(n_nodes);
  for (std::size_t v = 0; v < n_nodes; ++v)
    for (std::size_t w : out_edges[v]) in_edges[w].push_back(v);

  std::vector<bool> alive(n_nodes, true);
  std::deque<std::size_t> queue;
  for (std::size_t v = 0; v < n_train + n_test; ++v)
    if (support[v] == 0) {
      alive[v] = false;
      queue.push_back(v);
    }
  auto weaken = [&](std::size_t v) {
    if (alive[v] && --support[v] == 0) {
      alive[v] = false;
      queue.push_back(v);
    }
  };
  while (!queue.empty()) {
    const std::size_t dead = queue.front();
    queue.pop_front();
    if (is_train(dead)) {
      // Test cases citing it lose support; in any-split mode so do the
      // training cases it cited.
      for (std::size_t citer : in_edges[dead])
        if (is_test(citer)) weaken(citer);
      if (mode == CitedBy::kAnySplit)
        for (std::size_t cited : out_edges[dead])
          if (is_train(cited)) weaken(cited);
    } else if (is_test(dead)) {
      for (std::size_t cited : out_edges[dead])
        if (is_train(cited)) weaken(cited);
    }
  }

  Corpus out;
  out.num_articles = corpus.num_articles;
  out.article_names = corpus.article_names;
  out.validation = corpus.validation;
  for (std::size_t i = 0; i < n_train; ++i)
    if (alive[i]) out.train.push_back(corpus.train[i]);
  for (std::size_t i = 0; i < n_test; ++i)
    if (alive[n_train + i]) out.test.push_back(corpus.test[i]);
  if (out.train.empty()) throw Error(ErrorCode::kEmptySplit, "no training case survives precedent filtering");
  if (out.test.empty()) throw Error(ErrorCode::kEmptySplit, "no test case survives precedent filtering");
  return out;
}

/// Drops edges whose endpoints are no longer in `corpus`.
inline CitationNetwork restrict_network(const CitationNetwork& network, const Corpus& corpus) {
  std::set<std::string, std::less<>> ids;
  corpus.for_each_case([&](const Case& c, Split) { ids.insert(c.id); });
  CitationNetwork out;
  for (const auto& [citing, targets] : network.edges) {
    if (!ids.count(citing)) continue;
    for (const auto& cited : targets)
      if (ids.count(cited)) out.edges[citing].insert(cited);
  }
  return out;
}

}  // namespace precedent
