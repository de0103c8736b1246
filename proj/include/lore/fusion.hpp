#pragma once

/** \file fusion.hpp
 *  \brief Reciprocal Rank Fusion of several ranked lists.
 *
 * RRF(d) = sum_i 1 / (rank_i(d) + k); a list that does not contain d adds nothing.
 * The fused position of a passage is its context rank downstream.
 */

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lore/error.hpp"
#include "lore/ranked_list.hpp"

namespace lore {

inline constexpr int kDefaultRrfK = 60;

struct FusedContext {
  std::string passage_id;
  double rrf_score = 0.0;
  int context_rank = 0;  // 1-based
  int best_rank = 0;     // best rank in any single input list
};

namespace detail {

/// Sums in ascending rank order so the result does not depend on list order.
inline double rrf_sum(std::vector<int> ranks, int k) {
  std::sort(ranks.begin(), ranks.end());
  double s = 0.0;
  for (int r : ranks) s += 1.0 / static_cast<double>(r + k);
  return s;
}

}  // namespace detail

inline double rrf_score(std::span<const std::optional<int>> ranks, int k = kDefaultRrfK) {
  if (k < 1) throw Error("rrf k must be >= 1");
  std::vector<int> present;
  for (const auto& r : ranks) {
    if (!r) continue;
    if (*r <= 0) throw Error("rank must be >= 1, got " + std::to_string(*r));
    present.push_back(*r);
  }
  return detail::rrf_sum(std::move(present), k);
}

/// Union of all lists, best RRF first. Ties: best single-list rank, then passage id.
inline std::vector<FusedContext> fuse(std::span<const RankedList> lists, int k = kDefaultRrfK) {
  if (k < 1) throw Error("rrf k must be >= 1");
  std::unordered_map<std::string, std::vector<int>> ranks;
  for (const auto& list : lists) {
    validate(list);
    for (const auto& e : list.entries) ranks[e.passage_id].push_back(e.rank);
  }
  std::vector<FusedContext> fused;
  fused.reserve(ranks.size());
  for (auto& [id, rs] : ranks) {
    const int best = *std::min_element(rs.begin(), rs.end());
    fused.push_back({id, detail::rrf_sum(std::move(rs), k), 0, best});
  }
  std::sort(fused.begin(), fused.end(), [](const FusedContext& a, const FusedContext& b) {
    if (a.rrf_score != b.rrf_score) return a.rrf_score > b.rrf_score;
    if (a.best_rank != b.best_rank) return a.best_rank < b.best_rank;
    return a.passage_id < b.passage_id;
  });
  int rank = 0;
  for (auto& f : fused) f.context_rank = ++rank;
  return fused;
}

inline std::vector<FusedContext> fuse(std::initializer_list<RankedList> lists, int k = kDefaultRrfK) {
  return fuse(std::span<const RankedList>(lists.begin(), lists.size()), k);
}

}  // namespace lore
