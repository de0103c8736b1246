#pragma once

/** \file pipeline.hpp
 *  \brief End-to-end question answering: retrieve, fuse, generate per context, score, select.
 *
 * Both retrievers are queried to `retrieval_depth`, their lists are fused with RRF,
 * and the reader is called once for each of the first `top_k` fused contexts. Each
 * answer is scored with its context's fused rank and the best LoR score wins.
 */

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lore/corpus.hpp"
#include "lore/dense_index.hpp"
#include "lore/error.hpp"
#include "lore/fusion.hpp"
#include "lore/metrics.hpp"
#include "lore/reader.hpp"
#include "lore/scoring.hpp"
#include "lore/sparse_index.hpp"

namespace lore {

struct PipelineConfig {
  int top_k = 10;
  int rrf_k = kDefaultRrfK;
  Bm25Params bm25;
  LorWeights weights;
  int retrieval_depth = 50;
  int parallelism = 4;
  double min_dense_similarity = 0.0;  // dense hits at or below this are not evidence

  void validate() const {
    if (top_k < 1) throw Error("top_k must be >= 1");
    if (rrf_k < 1) throw Error("rrf_k must be >= 1");
    if (retrieval_depth < top_k) throw Error("retrieval_depth must be >= top_k");
    if (parallelism < 1) throw Error("parallelism must be >= 1");
    if (!std::isfinite(min_dense_similarity)) throw Error("min_dense_similarity must be finite");
    bm25.validate();
    weights.validate();
  }
};

/// Non-owning view of everything a query runs against.
struct Indexes {
  const Corpus& corpus;
  const SparseIndex& sparse;
  const DenseIndex& dense;
};

struct AnswerTrace {
  std::string query;
  std::vector<FusedContext> fused;
  std::vector<ScoredAnswer> candidates;  // ordered by context rank
  ScoredAnswer selected;
  std::vector<std::string> failures;  // one message per dropped context
};

namespace detail {

/// Runs fn(i) for i in [0, n) on at most `parallelism` threads. Rethrows nothing.
template <typename Fn>
void parallel_for(std::size_t n, int parallelism, Fn&& fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(parallelism, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (auto i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
}

}  // namespace detail

/// Retrieves and fuses without calling the generator.
inline std::vector<FusedContext> retrieve(std::string_view query, const PipelineConfig& config,
                                          const Indexes& indexes, const Reader& reader) {
  const auto depth = static_cast<std::size_t>(config.retrieval_depth);
  std::vector<RankedList> lists;
  lists.push_back(indexes.sparse.search(query, depth));
  const std::string q(query);
  const auto query_vec = reader.embed(std::span<const std::string>(&q, 1)).at(0);
  auto dense = indexes.dense.search(query_vec, depth);
  std::vector<std::pair<std::string, double>> kept;
  for (auto& e : dense.entries) {
    if (e.score > config.min_dense_similarity) kept.emplace_back(std::move(e.passage_id), e.score);
  }
  lists.push_back(make_ranked_list(dense.retriever_id, std::move(kept)));
  return fuse(lists, config.rrf_k);
}

/**
 * Throws NoEvidenceError when retrieval is empty, and ReaderError when every
 * generation call fails. Individual failed contexts are dropped and listed in
 * AnswerTrace::failures.
 */
inline AnswerTrace answer_question(std::string_view query, const PipelineConfig& config, const Indexes& indexes,
                                   const Reader& reader) {
  config.validate();
  if (query.find_first_not_of(" \t\r\n") == std::string_view::npos) throw Error("query must be non-empty");
  AnswerTrace trace;
  trace.query = std::string(query);
  trace.fused = retrieve(query, config, indexes, reader);
  if (trace.fused.empty()) throw NoEvidenceError("no passage matched the query");

  const auto k = std::min(trace.fused.size(), static_cast<std::size_t>(config.top_k));
  std::vector<std::optional<ScoredAnswer>> slots(k);
  std::vector<std::string> errors(k);
  detail::parallel_for(k, config.parallelism, [&](std::size_t i) {
    const auto& ctx = trace.fused[i];
    try {
      const auto& passage = indexes.corpus.get_passage(ctx.passage_id);
      auto generated = reader.generate(query, passage);
      if (generated.step_probs.empty()) throw ReaderError("reader returned no token probabilities");
      slots[i] = score_answer(std::move(generated.text), generated.step_probs, ctx.context_rank,
                              ctx.passage_id, config.weights);
    } catch (const std::exception& e) {
      errors[i] = ctx.passage_id + ": " + e.what();
    }
  });

  for (std::size_t i = 0; i < k; ++i) {
    if (slots[i]) {
      trace.candidates.push_back(std::move(*slots[i]));
    } else {
      trace.failures.push_back(std::move(errors[i]));
    }
  }
  if (trace.candidates.empty()) {
    throw ReaderError("all " + std::to_string(k) + " generation calls failed; first: " + trace.failures.front());
  }
  trace.selected = select(trace.candidates);
  return trace;
}

inline nlohmann::ordered_json to_json(const FusedContext& c) {
  return {{"passage_id", c.passage_id}, {"rrf_score", c.rrf_score}, {"context_rank", c.context_rank}};
}

inline nlohmann::ordered_json to_json(const ScoredAnswer& a) {
  return {{"answer", a.text},
          {"passage_id", a.passage_id},
          {"context_rank", a.context_rank},
          {"mean_score", a.mean_score},
          {"lor_score", a.lor_score}};
}

struct TraceRecord {
  std::string question_id;
  std::string query;
  std::optional<ScoredAnswer> selected;
  EvalRecord eval;
  std::string error;  // empty on success
  bool no_evidence = false;
};

inline nlohmann::ordered_json to_json(const TraceRecord& r) {
  nlohmann::ordered_json j{{"question_id", r.question_id}, {"query", r.query}};
  if (r.selected) {
    j["selected_answer"] = r.selected->text;
    j["lor"] = r.selected->lor_score;
    j["mean_score"] = r.selected->mean_score;
    j["context_rank"] = r.selected->context_rank;
  } else {
    j["selected_answer"] = nullptr;
    j["lor"] = nullptr;
    j["mean_score"] = nullptr;
    j["context_rank"] = nullptr;
  }
  j["em"] = r.eval.em;
  j["f1"] = r.eval.f1;
  j["rouge_l"] = r.eval.rouge_l;
  if (r.no_evidence) j["no_evidence"] = true;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

struct EvalResult {
  EvalReport report;
  std::vector<TraceRecord> records;
  std::size_t failed = 0;       // reader or other errors
  std::size_t no_evidence = 0;  // nothing retrieved
};

inline nlohmann::ordered_json to_json(const EvalResult& r) {
  return {{"n", r.report.n},
          {"em_pct", r.report.em_pct},
          {"f1_pct", r.report.f1_pct},
          {"rouge_l_pct", r.report.rouge_l_pct},
          {"failed", r.failed},
          {"no_evidence", r.no_evidence}};
}

/// Failed questions stay in the report with an empty prediction.
inline EvalResult evaluate(std::span<const QaPair> dataset, const PipelineConfig& config, const Indexes& indexes,
                           const Reader& reader) {
  config.validate();
  EvalResult result;
  std::vector<EvalRecord> evals;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& qa = dataset[i];
    TraceRecord rec;
    rec.question_id = qa.id.empty() ? "q" + std::to_string(i) : qa.id;
    rec.query = qa.question;
    std::string prediction;
    try {
      auto trace = answer_question(qa.question, config, indexes, reader);
      prediction = trace.selected.text;
      rec.selected = std::move(trace.selected);
    } catch (const NoEvidenceError& e) {
      rec.no_evidence = true;
      rec.error = e.what();
      ++result.no_evidence;
    } catch (const std::exception& e) {
      rec.error = e.what();
      ++result.failed;
    }
    rec.eval = evaluate_prediction(rec.question_id, std::move(prediction), qa.gold_answers);
    evals.push_back(rec.eval);
    result.records.push_back(std::move(rec));
  }
  result.report = aggregate(evals);
  return result;
}

}  // namespace lore
