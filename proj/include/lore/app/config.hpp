#pragma once

// Application configuration (JSON file) and the loaded engine shared by the CLI
// and the HTTP service.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "lore/corpus.hpp"
#include "lore/dense_index.hpp"
#include "lore/error.hpp"
#include "lore/pipeline.hpp"
#include "lore/reader.hpp"
#include "lore/sparse_index.hpp"

namespace lore::app {

namespace fs = std::filesystem;

inline constexpr const char* kConfigEnv = "LORE_CONFIG";
inline constexpr const char* kDefaultConfigFile = "lore.json";

struct ReaderOptions {
  int max_tokens = 32;
  std::string prompt_template{kDefaultPromptTemplate};
  std::size_t stub_embedding_dim = 256;
  int timeout_ms = 30000;
  int max_retries = 2;
  int retry_backoff_ms = 100;
};

struct AppConfig {
  fs::path corpus_path;
  fs::path embeddings_path;
  fs::path index_dir;
  std::optional<std::string> reader_endpoint;
  fs::path stub_table_path;
  PipelineConfig pipeline;
  ReaderOptions reader;
  int port = 8080;
  double max_failure_fraction = 0.1;

  void validate() const {
    pipeline.validate();
    if (port < 1 || port > 65535) throw Error("port must lie in [1, 65535]");
    if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0)) {
      throw Error("max_failure_fraction must lie in [0, 1]");
    }
  }
};

namespace detail {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

inline fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace detail

/// Relative paths are resolved against `base_dir`.
inline AppConfig parse_config(const nlohmann::json& j, const fs::path& base_dir = {}) {
  AppConfig c;
  try {
    for (auto [key, field] : {std::pair{"corpus_path", &c.corpus_path},
                              std::pair{"embeddings_path", &c.embeddings_path},
                              std::pair{"index_dir", &c.index_dir},
                              std::pair{"stub_table_path", &c.stub_table_path}}) {
      if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        *field = detail::resolve(base_dir, it->get<std::string>());
      }
    }
    if (auto it = j.find("reader_endpoint"); it != j.end() && !it->is_null()) {
      c.reader_endpoint = it->get<std::string>();
    }
    detail::read_if(j, "port", c.port);
    detail::read_if(j, "max_failure_fraction", c.max_failure_fraction);
    if (auto it = j.find("pipeline"); it != j.end()) {
      const auto& p = *it;
      detail::read_if(p, "top_k", c.pipeline.top_k);
      detail::read_if(p, "rrf_k", c.pipeline.rrf_k);
      detail::read_if(p, "retrieval_depth", c.pipeline.retrieval_depth);
      detail::read_if(p, "parallelism", c.pipeline.parallelism);
      detail::read_if(p, "min_dense_similarity", c.pipeline.min_dense_similarity);
      if (auto b = p.find("bm25"); b != p.end()) {
        detail::read_if(*b, "k1", c.pipeline.bm25.k1);
        detail::read_if(*b, "b", c.pipeline.bm25.b);
      }
      if (auto w = p.find("weights"); w != p.end()) {
        detail::read_if(*w, "w1", c.pipeline.weights.w1);
        detail::read_if(*w, "w2", c.pipeline.weights.w2);
      }
    }
    if (auto it = j.find("reader"); it != j.end()) {
      const auto& r = *it;
      detail::read_if(r, "max_tokens", c.reader.max_tokens);
      detail::read_if(r, "prompt_template", c.reader.prompt_template);
      detail::read_if(r, "stub_embedding_dim", c.reader.stub_embedding_dim);
      detail::read_if(r, "timeout_ms", c.reader.timeout_ms);
      detail::read_if(r, "max_retries", c.reader.max_retries);
      detail::read_if(r, "retry_backoff_ms", c.reader.retry_backoff_ms);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline AppConfig load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  try {
    return parse_config(nlohmann::json::parse(in), path.parent_path());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("config '" + path.string() + "': " + e.what());
  }
}

/// Explicit path, else $LORE_CONFIG, else ./lore.json when present, else defaults.
inline AppConfig load_config(const std::optional<fs::path>& explicit_path) {
  if (explicit_path) return load_config_file(*explicit_path);
  if (const char* env = std::getenv(kConfigEnv); env && *env) return load_config_file(env);
  if (fs::exists(kDefaultConfigFile)) return load_config_file(kDefaultConfigFile);
  return {};
}

inline ReaderConfig make_reader_config(const AppConfig& c) {
  ReaderConfig r;
  r.max_tokens = c.reader.max_tokens;
  r.prompt_template = c.reader.prompt_template;
  r.stub_embedding_dim = c.reader.stub_embedding_dim;
  r.timeout = std::chrono::milliseconds(c.reader.timeout_ms);
  r.max_retries = c.reader.max_retries;
  r.retry_backoff = std::chrono::milliseconds(c.reader.retry_backoff_ms);
  if (c.reader_endpoint && !c.stub_table_path.empty()) {
    throw Error("configure either reader_endpoint or stub_table_path, not both");
  }
  if (c.reader_endpoint) {
    r.endpoint_url = *c.reader_endpoint;
  } else if (!c.stub_table_path.empty()) {
    r.stub_table = load_stub_table(c.stub_table_path);
  } else {
    throw Error("no reader configured: set reader_endpoint or stub_table_path");
  }
  return r;
}

inline constexpr const char* kPassagesFile = "passages.jsonl";
inline constexpr const char* kSparseFile = "sparse.idx";
inline constexpr const char* kDenseFile = "dense.idx";

/// Indexes and reader loaded from an index directory. Read-only once built.
struct Engine {
  Corpus corpus;
  SparseIndex sparse;
  DenseIndex dense;
  std::unique_ptr<Reader> reader;

  Indexes indexes() const { return {corpus, sparse, dense}; }
};

inline std::unique_ptr<Engine> load_engine(const fs::path& index_dir, const ReaderConfig& reader) {
  if (index_dir.empty()) throw Error("index_dir is not configured");
  auto engine = std::make_unique<Engine>();
  engine->corpus.ingest_jsonl(index_dir / kPassagesFile);
  engine->sparse = SparseIndex::load(index_dir / kSparseFile);
  engine->dense = DenseIndex::load(index_dir / kDenseFile);
  for (const auto& r : engine->dense.records()) {
    if (!engine->corpus.find(r.passage_id)) throw Error("dense index references unknown passage '" + r.passage_id + "'");
  }
  engine->reader = make_reader(reader);
  return engine;
}

}  // namespace lore::app
