#pragma once

/** \file scoring.hpp
 *  \brief Answer confidence and the LoR selection score.
 *
 * Each candidate answer carries the probability its generator assigned to every
 * emitted token (a vocabulary softmax taken at that decoding step). The mean of
 * those probabilities is the answer's confidence; LoR blends it with the inverse
 * 1-based context rank:
 *
 *     lor = w1 * mean + w2 / context_rank
 *
 * and the candidate with the highest lor is selected.
 */

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lore/error.hpp"

namespace lore {

struct LorWeights {
  double w1 = 0.8;
  double w2 = 0.2;

  void validate() const {
    if (!(w1 >= 0.0) || !(w2 >= 0.0) || !std::isfinite(w1) || !std::isfinite(w2)) {
      throw Error("lor weights must be finite and non-negative");
    }
    if (!(w1 + w2 > 0.0)) throw Error("lor weights must not both be zero");
  }
};

struct ScoredAnswer {
  std::string text;
  double mean_score = 0.0;
  int context_rank = 0;
  double lor_score = 0.0;
  std::string passage_id;
};

/// Softmax of `logits` evaluated at `emitted`, computed with max subtraction.
inline double step_probability(std::span<const double> logits, std::size_t emitted) {
  if (logits.empty()) throw Error("logit vector is empty");
  if (emitted >= logits.size()) throw Error("emitted token index out of range");
  double peak = logits[0];
  for (double l : logits) {
    if (!std::isfinite(l)) throw Error("logits must be finite");
    peak = std::max(peak, l);
  }
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - peak);
  return std::exp(logits[emitted] - peak) / denom;
}

inline double mean_score(std::span<const double> step_probs) {
  if (step_probs.empty()) throw Error("mean score of an empty probability list");
  double sum = 0.0;
  for (double p : step_probs) {
    if (!(p > 0.0 && p <= 1.0)) throw Error("step probability outside (0, 1]");
    sum += p;
  }
  return sum / static_cast<double>(step_probs.size());
}

inline double lor(double mean, int context_rank, const LorWeights& w = {}) {
  if (context_rank < 1) throw Error("context rank must be >= 1");
  if (!(mean >= 0.0 && mean <= 1.0)) throw Error("mean score outside [0, 1]");
  return w.w1 * mean + w.w2 / static_cast<double>(context_rank);
}

inline ScoredAnswer score_answer(std::string text, std::span<const double> step_probs, int context_rank,
                                 std::string passage_id, const LorWeights& w = {}) {
  ScoredAnswer a;
  a.text = std::move(text);
  a.mean_score = mean_score(step_probs);
  a.context_rank = context_rank;
  a.lor_score = lor(a.mean_score, context_rank, w);
  a.passage_id = std::move(passage_id);
  return a;
}

/// True when `a` should be selected over `b`.
inline bool better_answer(const ScoredAnswer& a, const ScoredAnswer& b) {
  if (a.lor_score != b.lor_score) return a.lor_score > b.lor_score;
  if (a.context_rank != b.context_rank) return a.context_rank < b.context_rank;
  return a.text < b.text;
}

/// Highest lor; ties go to the smaller context rank, then the lexicographically smaller text.
inline const ScoredAnswer& select(std::span<const ScoredAnswer> answers) {
  if (answers.empty()) throw Error("cannot select from zero answers");
  const ScoredAnswer* best = &answers[0];
  for (const auto& a : answers.subspan(1)) {
    if (better_answer(a, *best)) best = &a;
  }
  return *best;
}

}  // namespace lore
