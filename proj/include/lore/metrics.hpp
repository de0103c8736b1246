#pragma once

// QA evaluation metrics: exact match, token F1 and ROUGE-L, using the SQuAD
// answer normalization and taking the maximum over all gold answers.

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <unicode/uchar.h>

#include "lore/error.hpp"
#include "lore/text.hpp"

namespace lore {

namespace detail {

inline bool is_ascii_punct(UChar32 c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

inline bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

}  // namespace detail

/// Whitespace-separated tokens of the normalized answer.
inline std::vector<std::string> answer_tokens(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && !detail::is_article(current)) words.push_back(current);
    current.clear();
  };
  detail::for_each_code_point(text, [&](UChar32 c) {
    if (c < 0) return;
    if (u_isUWhiteSpace(c)) {
      flush();
    } else if (!detail::is_ascii_punct(c)) {
      detail::append_utf8(current, u_tolower(c));
    }
  });
  flush();
  return words;
}

/// Lowercase, strip ASCII punctuation, drop "a"/"an"/"the", collapse whitespace.
inline std::string normalize_answer(std::string_view text) { return join(answer_tokens(text)); }

inline void require_golds(std::span<const std::string> golds) {
  if (golds.empty()) throw Error("at least one gold answer is required");
}

inline int exact_match(std::string_view prediction, std::span<const std::string> golds) {
  require_golds(golds);
  const auto pred = normalize_answer(prediction);
  for (const auto& g : golds) {
    if (normalize_answer(g) == pred) return 1;
  }
  return 0;
}

namespace detail {

inline double harmonic(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

inline double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::unordered_map<std::string_view, int> counts;
  for (const auto& t : gold) ++counts[t];
  std::size_t common = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  return harmonic(static_cast<double>(common) / static_cast<double>(pred.size()),
                  static_cast<double>(common) / static_cast<double>(gold.size()));
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (const auto& x : a) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const auto up = row[j];
      row[j] = x == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

inline double rouge_l_tokens(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  const auto lcs = lcs_length(pred, gold);
  if (lcs == 0) return 0.0;
  return harmonic(static_cast<double>(lcs) / static_cast<double>(pred.size()),
                  static_cast<double>(lcs) / static_cast<double>(gold.size()));
}

}  // namespace detail

inline double f1(std::string_view prediction, std::span<const std::string> golds) {
  require_golds(golds);
  const auto pred = answer_tokens(prediction);
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, detail::token_f1(pred, answer_tokens(g)));
  return best;
}

/// LCS F-measure (beta = 1) over normalized tokens.
inline double rouge_l(std::string_view prediction, std::string_view gold) {
  return detail::rouge_l_tokens(answer_tokens(prediction), answer_tokens(gold));
}

inline double rouge_l(std::string_view prediction, std::span<const std::string> golds) {
  require_golds(golds);
  const auto pred = answer_tokens(prediction);
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, detail::rouge_l_tokens(pred, answer_tokens(g)));
  return best;
}

struct EvalRecord {
  std::string question_id;
  std::string prediction;
  std::vector<std::string> golds;
  int em = 0;
  double f1 = 0.0;
  double rouge_l = 0.0;
};

inline EvalRecord evaluate_prediction(std::string question_id, std::string prediction,
                                      std::vector<std::string> golds) {
  EvalRecord r;
  r.em = exact_match(prediction, golds);
  r.f1 = f1(prediction, golds);
  r.rouge_l = rouge_l(prediction, std::span<const std::string>(golds));
  r.question_id = std::move(question_id);
  r.prediction = std::move(prediction);
  r.golds = std::move(golds);
  return r;
}

struct EvalReport {
  std::size_t n = 0;
  double em_pct = 0.0;
  double f1_pct = 0.0;
  double rouge_l_pct = 0.0;
};

/// 100 x the mean of each per-record metric.
inline EvalReport aggregate(std::span<const EvalRecord> records) {
  EvalReport report;
  report.n = records.size();
  if (records.empty()) return report;
  double em = 0.0, f = 0.0, rl = 0.0;
  for (const auto& r : records) {
    em += r.em;
    f += r.f1;
    rl += r.rouge_l;
  }
  const auto n = static_cast<double>(records.size());
  report.em_pct = 100.0 * em / n;
  report.f1_pct = 100.0 * f / n;
  report.rouge_l_pct = 100.0 * rl / n;
  return report;
}

}  // namespace lore
