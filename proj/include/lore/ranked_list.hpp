#pragma once

#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lore/error.hpp"

namespace lore {

struct RankedEntry {
  std::string passage_id;
  double score = 0.0;
  int rank = 0;  // 1-based
};

/// One retriever's output, best first.
struct RankedList {
  std::string retriever_id;
  std::vector<RankedEntry> entries;

  bool empty() const noexcept { return entries.empty(); }
  std::size_t size() const noexcept { return entries.size(); }
};

/// Assigns ranks 1..n to already-sorted (id, score) pairs.
inline RankedList make_ranked_list(std::string retriever_id,
                                   std::vector<std::pair<std::string, double>> sorted) {
  RankedList list{std::move(retriever_id), {}};
  list.entries.reserve(sorted.size());
  int rank = 0;
  for (auto& [id, score] : sorted) list.entries.push_back({std::move(id), score, ++rank});
  return list;
}

/// Throws unless ranks are 1..n in order and ids are unique.
inline void validate(const RankedList& list) {
  std::unordered_set<std::string_view> seen;
  int expected = 1;
  for (const auto& e : list.entries) {
    if (e.rank != expected) {
      throw Error("ranked list '" + list.retriever_id + "': expected rank " + std::to_string(expected) +
                  " but found " + std::to_string(e.rank));
    }
    if (!seen.insert(e.passage_id).second) {
      throw Error("ranked list '" + list.retriever_id + "': duplicate passage '" + e.passage_id + "'");
    }
    ++expected;
  }
}

/// Descending score, ascending id. Shared by both retrievers.
inline bool ranks_before(const std::pair<std::string, double>& a, const std::pair<std::string, double>& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;
}

}  // namespace lore
