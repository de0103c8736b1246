#pragma once

/** \file reader.hpp
 *  \brief Answer generation and text embedding.
 *
 * A Reader turns (query, one context) into an answer plus the probability of
 * every emitted token, and turns texts into embedding vectors. Two backends:
 *
 *  - HttpReader talks to an inference sidecar:
 *        POST /generate {"prompt", "max_tokens"} -> {"answer", "token_probs"}
 *        POST /embed    {"texts"}                -> {"vectors", "dim"}
 *        GET  /healthz                            -> {"status": "ok"}
 *  - StubReader answers from a fixed (query, passage id) table and embeds by
 *    feature hashing. It is deterministic and needs no network.
 */

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "lore/corpus.hpp"
#include "lore/dense_index.hpp"
#include "lore/error.hpp"
#include "lore/text.hpp"

namespace lore {

struct GeneratedAnswer {
  std::string text;
  std::vector<double> step_probs;
  int context_rank = 0;  // filled in by the pipeline
};

struct StubAnswer {
  std::string answer;
  std::vector<double> token_probs;
};

/// Keyed by (query, passage id).
using StubTable = std::map<std::pair<std::string, std::string>, StubAnswer>;

inline constexpr std::string_view kDefaultPromptTemplate = "question: {query} context: {context}";

struct ReaderConfig {
  std::optional<std::string> endpoint_url;
  std::optional<StubTable> stub_table;
  int max_tokens = 32;
  std::string prompt_template{kDefaultPromptTemplate};
  std::size_t stub_embedding_dim = 256;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::chrono::milliseconds retry_backoff{100};

  void validate() const {
    if (endpoint_url.has_value() == stub_table.has_value()) {
      throw Error("reader needs exactly one of an endpoint url or a stub table");
    }
    if (max_tokens < 1) throw Error("max_tokens must be >= 1");
    if (max_retries < 0) throw Error("max_retries must be >= 0");
    if (stub_embedding_dim == 0) throw Error("stub embedding dimension must be >= 1");
    if (prompt_template.find("{query}") == std::string::npos ||
        prompt_template.find("{context}") == std::string::npos) {
      throw Error("prompt template needs {query} and {context} placeholders");
    }
  }
};

/// Substitutes {query} and {context} in one pass; substituted text is never rescanned.
inline std::string render_prompt(std::string_view tmpl, std::string_view query, std::string_view context) {
  std::string out;
  out.reserve(tmpl.size() + query.size() + context.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.compare(i, 7, "{query}") == 0) {
      out.append(query);
      i += 7;
    } else if (tmpl.compare(i, 9, "{context}") == 0) {
      out.append(context);
      i += 9;
    } else {
      out.push_back(tmpl[i++]);
    }
  }
  return out;
}

/// Throws unless every probability is finite and in (0, 1].
inline void check_step_probs(std::span<const double> probs) {
  for (double p : probs) {
    if (!std::isfinite(p) || !(p > 0.0) || p > 1.0) throw Error("token probability outside (0, 1]");
  }
}

class Reader {
 public:
  virtual ~Reader() = default;
  virtual GeneratedAnswer generate(std::string_view query, const Passage& context) const = 0;
  virtual std::vector<Vector> embed(std::span<const std::string> texts) const = 0;
  virtual bool healthy() const { return true; }
};

/// Text up to and including the first '.', '!' or '?' that ends a sentence.
inline std::string first_sentence(std::string_view text) {
  const auto start = text.find_first_not_of(" \t\r\n");
  if (start == std::string_view::npos) return {};
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') &&
        (i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\n' || text[i + 1] == '\t' ||
         text[i + 1] == '\r')) {
      return std::string(text.substr(start, i + 1 - start));
    }
  }
  auto end = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(start, end + 1 - start));
}

/// Token counts hashed into `dim` buckets, L2-normalized. Token-free text hashes as a whole.
/// Texts sharing no bucket have cosine exactly 0.
inline Vector hashed_embedding(std::string_view text, std::size_t dim) {
  Vector v(dim, 0.0);
  for (const auto& token : tokenize(text)) v[fnv1a(token) % dim] += 1.0;
  if (l2_norm(v) == 0.0) v[fnv1a(text) % dim] = 1.0;
  return normalized(v);
}

class StubReader final : public Reader {
 public:
  explicit StubReader(StubTable table, std::size_t embedding_dim = 256)
      : table_(std::move(table)), dim_(embedding_dim) {
    if (dim_ == 0) throw Error("stub embedding dimension must be >= 1");
    for (const auto& [key, entry] : table_) {
      if (!entry.answer.empty() && entry.token_probs.empty()) {
        throw Error("stub entry for ('" + key.first + "', '" + key.second + "') has no token probabilities");
      }
      check_step_probs(entry.token_probs);
    }
  }

  /// Table hit, or the first sentence of the context with a single 0.5 probability.
  GeneratedAnswer generate(std::string_view query, const Passage& context) const override {
    if (query.empty()) throw Error("query must be non-empty");
    auto it = table_.find({std::string(query), context.id});
    if (it != table_.end()) return {it->second.answer, it->second.token_probs, 0};
    return {first_sentence(context.text), {0.5}, 0};
  }

  std::vector<Vector> embed(std::span<const std::string> texts) const override {
    if (texts.empty()) throw Error("embed needs at least one text");
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hashed_embedding(t, dim_));
    return out;
  }

  const StubTable& table() const noexcept { return table_; }

 private:
  StubTable table_;
  std::size_t dim_;
};

/// JSONL rows of {query, passage_id, answer, token_probs}.
inline StubTable load_stub_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stub table '" + path.string() + "'");
  StubTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto row = nlohmann::json::parse(line);
      StubAnswer entry{row.at("answer").get<std::string>(), row.at("token_probs").get<std::vector<double>>()};
      check_step_probs(entry.token_probs);
      table[{row.at("query").get<std::string>(), row.at("passage_id").get<std::string>()}] = std::move(entry);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    } catch (const Error& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return table;
}

class HttpReader final : public Reader {
 public:
  explicit HttpReader(ReaderConfig config) : config_(std::move(config)) {
    if (!config_.endpoint_url) throw Error("http reader needs an endpoint url");
  }

  GeneratedAnswer generate(std::string_view query, const Passage& context) const override {
    if (query.empty()) throw Error("query must be non-empty");
    const nlohmann::json body{{"prompt", render_prompt(config_.prompt_template, query, context.text)},
                              {"max_tokens", config_.max_tokens}};
    return with_retries("/generate", body, [](const nlohmann::json& j) {
      GeneratedAnswer a;
      a.text = j.at("answer").get<std::string>();
      const auto& probs = j.at("token_probs");
      if (!probs.is_array()) throw ReaderError("token_probs is not an array");
      for (const auto& p : probs) {
        if (!p.is_number()) throw ReaderError("token_probs contains a non-number");
        a.step_probs.push_back(p.get<double>());
      }
      try {
        check_step_probs(a.step_probs);
      } catch (const Error& e) {
        throw ReaderError(e.what());
      }
      if (!a.text.empty() && a.step_probs.empty()) throw ReaderError("answer without token_probs");
      return a;
    });
  }

  std::vector<Vector> embed(std::span<const std::string> texts) const override {
    if (texts.empty()) throw Error("embed needs at least one text");
    const nlohmann::json body{{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
    return with_retries("/embed", body, [n = texts.size()](const nlohmann::json& j) {
      auto vectors = j.at("vectors").get<std::vector<Vector>>();
      const auto dim = j.at("dim").get<std::size_t>();
      if (vectors.size() != n) throw ReaderError("embed returned the wrong number of vectors");
      for (const auto& v : vectors) {
        if (v.size() != dim || dim == 0) throw ReaderError("embed returned a vector of the wrong dimension");
      }
      return vectors;
    });
  }

  bool healthy() const override {
    auto client = make_client();
    auto res = client.Get("/healthz");
    if (!res || res->status != 200) return false;
    try {
      return nlohmann::json::parse(res->body).value("status", "") == "ok";
    } catch (const nlohmann::json::exception&) {
      return false;
    }
  }

 private:
  httplib::Client make_client() const {
    httplib::Client client(*config_.endpoint_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    return client;
  }

  /// One fresh client per attempt, so concurrent calls never share a connection.
  template <typename Decode>
  auto with_retries(const std::string& route, const nlohmann::json& body, Decode decode) const
      -> decltype(decode(body)) {
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(config_.retry_backoff);
      auto client = make_client();
      auto res = client.Post(route, body.dump(), "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      try {
        return decode(nlohmann::json::parse(res->body));
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("malformed response: ") + e.what();
      } catch (const ReaderError& e) {
        last_error = std::string("malformed response: ") + e.what();
      }
    }
    throw ReaderError(route + " failed after " + std::to_string(config_.max_retries + 1) +
                      " attempt(s): " + last_error);
  }

  ReaderConfig config_;
};

inline std::unique_ptr<Reader> make_reader(const ReaderConfig& config) {
  config.validate();
  if (config.stub_table) return std::make_unique<StubReader>(*config.stub_table, config.stub_embedding_dim);
  return std::make_unique<HttpReader>(config);
}

}  // namespace lore
