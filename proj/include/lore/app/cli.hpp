#pragma once

// Command line front end:
//   lore index --corpus P [--embeddings P] --out DIR
//   lore query "Q" [--top-k N]
//   lore eval --dataset P --out DIR [--top-k N]
//   lore serve [--port N]

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lore/app/config.hpp"
#include "lore/app/service.hpp"
#include "lore/corpus.hpp"
#include "lore/dense_index.hpp"
#include "lore/error.hpp"
#include "lore/pipeline.hpp"
#include "lore/sparse_index.hpp"

namespace lore::app {

struct IndexSummary {
  CorpusStats stats;
  fs::path sparse_path;
  fs::path dense_path;
};

/// `.json` corpora are read as SQuAD, anything else as passage JSONL.
inline Corpus load_corpus(const fs::path& path) {
  if (!fs::exists(path)) throw Error("corpus file '" + path.string() + "' does not exist");
  Corpus corpus;
  if (path.extension() == ".json") {
    for (auto& p : load_squad(path).passages) corpus.add(std::move(p));
  } else {
    corpus.ingest_jsonl(path);
  }
  if (corpus.empty()) throw Error("corpus '" + path.string() + "' has no passages");
  return corpus;
}

/// Without an embeddings file the passages are embedded through the reader.
inline IndexSummary build_indexes(const AppConfig& config) {
  if (config.corpus_path.empty()) throw Error("--corpus is required");
  if (config.index_dir.empty()) throw Error("--out is required");
  const auto corpus = load_corpus(config.corpus_path);

  std::vector<EmbeddingRecord> records;
  if (!config.embeddings_path.empty()) {
    if (!fs::exists(config.embeddings_path)) {
      throw Error("embeddings file '" + config.embeddings_path.string() + "' does not exist");
    }
    records = load_embeddings(config.embeddings_path);
    for (const auto& r : records) {
      if (!corpus.find(r.passage_id)) throw Error("embedding for unknown passage '" + r.passage_id + "'");
    }
  } else {
    const auto reader = make_reader(make_reader_config(config));
    std::vector<std::string> texts;
    for (const auto& p : corpus.passages()) texts.push_back(p.text);
    auto vectors = reader->embed(texts);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      records.push_back({corpus.passages()[i].id, std::move(vectors[i])});
    }
  }

  const auto sparse = SparseIndex::build(corpus, config.pipeline.bm25);
  const auto dense = DenseIndex::build(std::move(records));
  fs::create_directories(config.index_dir);
  IndexSummary summary{corpus.stats(), config.index_dir / kSparseFile, config.index_dir / kDenseFile};
  corpus.save_jsonl(config.index_dir / kPassagesFile);
  sparse.save(summary.sparse_path);
  dense.save(summary.dense_path);
  return summary;
}

inline nlohmann::ordered_json query_json(const AnswerTrace& trace, int top_k) {
  nlohmann::ordered_json out{{"query", trace.query},
                             {"no_evidence", false},
                             {"selected_answer", trace.selected.text},
                             {"passage_id", trace.selected.passage_id},
                             {"lor_score", trace.selected.lor_score},
                             {"mean_score", trace.selected.mean_score},
                             {"context_rank", trace.selected.context_rank}};
  auto contexts = nlohmann::ordered_json::array();
  const auto shown = std::min(trace.fused.size(), static_cast<std::size_t>(top_k));
  for (std::size_t i = 0; i < shown; ++i) contexts.push_back(to_json(trace.fused[i]));
  out["contexts"] = std::move(contexts);
  auto candidates = nlohmann::ordered_json::array();
  for (const auto& c : trace.candidates) candidates.push_back(to_json(c));
  out["candidates"] = std::move(candidates);
  if (!trace.failures.empty()) out["failures"] = trace.failures;
  return out;
}

inline void write_eval_outputs(const EvalResult& result, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream trace(out_dir / "trace.jsonl", std::ios::binary);
  if (!trace) throw Error("cannot write '" + (out_dir / "trace.jsonl").string() + "'");
  for (const auto& r : result.records) trace << to_json(r).dump() << '\n';
  std::ofstream summary(out_dir / "summary.json", std::ios::binary);
  if (!summary) throw Error("cannot write '" + (out_dir / "summary.json").string() + "'");
  summary << to_json(result).dump(2) << '\n';
}

namespace detail {

inline QaService* active_service = nullptr;

inline void stop_active_service(int) {
  if (active_service) active_service->stop();
}

}  // namespace detail

/// Returns the process exit code. Never throws.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Hybrid-retrieval question answering with logit/rank answer selection", "lore"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::string> index_dir, reader_endpoint, stub_table;
  app.add_option("--config", config_path, "JSON config file (default: $LORE_CONFIG or ./lore.json)");

  auto* index = app.add_subcommand("index", "Build and persist the sparse and dense indexes");
  std::optional<std::string> corpus, embeddings, out_dir;
  index->add_option("--corpus", corpus, "Passage JSONL, or SQuAD v1.1 JSON (.json)");
  index->add_option("--embeddings", embeddings, "Embedding JSONL {id, vector}; omitted: embed via the reader");
  index->add_option("--out", out_dir, "Index directory to write");

  auto* query = app.add_subcommand("query", "Answer one question");
  std::string question;
  std::optional<int> top_k;
  query->add_option("question", question, "Question text")->required();
  query->add_option("--top-k", top_k, "Contexts passed to the reader")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Evaluate on a QA dataset");
  std::string dataset;
  std::string eval_out;
  eval->add_option("--dataset", dataset, "SQuAD v1.1 JSON (.json) or QA JSONL")->required();
  eval->add_option("--out", eval_out, "Directory for trace.jsonl and summary.json")->required();
  eval->add_option("--top-k", top_k, "Contexts passed to the reader")->check(CLI::PositiveNumber);
  std::optional<double> max_fail;
  eval->add_option("--max-failure-fraction", max_fail, "Exit non-zero above this failed fraction")
      ->check(CLI::Range(0.0, 1.0));

  auto* serve = app.add_subcommand("serve", "Run the HTTP question answering service");
  std::optional<int> port;
  std::string host = "127.0.0.1";
  serve->add_option("--port", port, "Listen port")->check(CLI::Range(1, 65535));
  serve->add_option("--host", host, "Listen address");

  for (auto* sub : {query, eval, serve}) {
    sub->add_option("--index", index_dir, "Index directory");
  }
  for (auto* sub : {index, query, eval, serve}) {
    sub->add_option("--reader-endpoint", reader_endpoint, "Inference sidecar base URL");
    sub->add_option("--stub-table", stub_table, "Stub reader table JSONL");
  }

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    auto config = load_config(config_path ? std::optional<fs::path>(*config_path) : std::nullopt);
    if (index_dir) config.index_dir = *index_dir;
    if (reader_endpoint) {
      config.reader_endpoint = *reader_endpoint;
      config.stub_table_path.clear();
    }
    if (stub_table) {
      config.stub_table_path = *stub_table;
      config.reader_endpoint.reset();
    }
    if (top_k) {
      config.pipeline.top_k = *top_k;
      config.pipeline.retrieval_depth = std::max(config.pipeline.retrieval_depth, *top_k);
    }
    if (port) config.port = *port;
    if (max_fail) config.max_failure_fraction = *max_fail;
    config.validate();

    if (*index) {
      if (corpus) config.corpus_path = *corpus;
      if (embeddings) config.embeddings_path = *embeddings;
      if (out_dir) config.index_dir = *out_dir;
      const auto summary = build_indexes(config);
      nlohmann::ordered_json j = to_json(summary.stats);
      j["sparse_index"] = summary.sparse_path.string();
      j["dense_index"] = summary.dense_path.string();
      out << j.dump(2) << '\n';
      return 0;
    }

    const auto engine = load_engine(config.index_dir, make_reader_config(config));

    if (*query) {
      try {
        const auto trace = answer_question(question, config.pipeline, engine->indexes(), *engine->reader);
        out << query_json(trace, config.pipeline.top_k).dump(2) << '\n';
      } catch (const NoEvidenceError&) {
        out << nlohmann::ordered_json{{"query", question}, {"no_evidence", true}}.dump(2) << '\n';
      }
      return 0;
    }

    if (*eval) {
      const auto qas = load_questions(dataset);
      const auto result = evaluate(qas, config.pipeline, engine->indexes(), *engine->reader);
      write_eval_outputs(result, eval_out);
      out << "questions: " << result.report.n << '\n'
          << "EM:        " << result.report.em_pct << "%\n"
          << "F1:        " << result.report.f1_pct << "%\n"
          << "ROUGE-L:   " << result.report.rouge_l_pct << "%\n"
          << "failed:    " << result.failed << '\n'
          << "no evidence: " << result.no_evidence << '\n';
      const double fraction = qas.empty() ? 0.0 : static_cast<double>(result.failed) / static_cast<double>(qas.size());
      if (fraction > config.max_failure_fraction) {
        err << "error: " << result.failed << " of " << qas.size() << " questions failed\n";
        return 3;
      }
      return 0;
    }

    if (*serve) {
      QaService service(*engine, config.pipeline);
      if (!service.bind(host, config.port)) {
        err << "error: cannot bind " << host << ":" << config.port << '\n';
        return 1;
      }
      detail::active_service = &service;
      std::signal(SIGINT, detail::stop_active_service);
      std::signal(SIGTERM, detail::stop_active_service);
      out << "listening on " << host << ":" << config.port << std::endl;
      service.listen();
      detail::active_service = nullptr;
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, out, err);
}

}  // namespace lore::app
