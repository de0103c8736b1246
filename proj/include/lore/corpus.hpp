#pragma once

/** \file corpus.hpp
 *  \brief Passage storage plus the JSONL corpus and SQuAD v1.1 readers.
 *
 * A Corpus is filled once and then only read. Passages keep insertion order,
 * which is the order index builders walk them in.
 */

#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "lore/error.hpp"
#include "lore/text.hpp"

namespace lore {

struct Passage {
  std::string id;
  std::string title;
  std::string text;
  std::size_t token_count = 0;
};

struct QaPair {
  std::string id;  // empty when the source carries no question id
  std::string question;
  std::vector<std::string> gold_answers;
  std::optional<std::string> passage_id;
};

struct CorpusStats {
  std::size_t num_passages = 0;
  double avgdl = 0.0;
  std::size_t vocab_size = 0;
};

inline nlohmann::ordered_json to_json(const CorpusStats& s) {
  return {{"num_passages", s.num_passages}, {"avgdl", s.avgdl}, {"vocab_size", s.vocab_size}};
}

/// Builds a passage, deriving token_count. Rejects empty ids and token-free text.
inline Passage make_passage(std::string id, std::string title, std::string text) {
  if (id.empty()) throw Error("passage id must be non-empty");
  if (text.empty()) throw Error("passage '" + id + "' has empty text");
  const auto count = tokenize(text).size();
  if (count == 0) throw Error("passage '" + id + "' has no tokens");
  return Passage{std::move(id), std::move(title), std::move(text), count};
}

class Corpus {
 public:
  /// Throws on duplicate id. token_count is always recomputed from the text.
  void add(Passage passage) {
    passage = make_passage(std::move(passage.id), std::move(passage.title), std::move(passage.text));
    if (by_id_.contains(passage.id)) throw Error("duplicate passage id '" + passage.id + "'");
    by_id_.emplace(passage.id, passages_.size());
    passages_.push_back(std::move(passage));
  }

  /// Reads newline-delimited {id, title?, text} records. Blank lines are skipped.
  CorpusStats ingest_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus file '" + path.string() + "'");
    const auto source = path.string();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
      }
      if (!record.is_object()) throw ParseError(source, line_no, "record is not an object");
      auto field = [&](const char* name, bool required) -> std::string {
        auto it = record.find(name);
        if (it == record.end() || it->is_null()) {
          if (required) throw ParseError(source, line_no, std::string("missing \"") + name + "\"");
          return {};
        }
        if (!it->is_string()) throw ParseError(source, line_no, std::string("\"") + name + "\" is not a string");
        return it->get<std::string>();
      };
      auto id = field("id", true);
      auto title = field("title", false);
      auto text = field("text", true);
      try {
        add(Passage{std::move(id), std::move(title), std::move(text), 0});
      } catch (const ParseError&) {
        throw;
      } catch (const Error& e) {
        throw ParseError(source, line_no, e.what());
      }
    }
    return stats();
  }

  /// Writes the passages back out in ingest_jsonl format.
  void save_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    for (const auto& p : passages_) {
      nlohmann::ordered_json j{{"id", p.id}, {"title", p.title}, {"text", p.text}};
      out << j.dump() << '\n';
    }
  }

  const Passage& get_passage(std::string_view id) const {
    const auto* p = find(id);
    if (!p) throw Error("unknown passage id '" + std::string(id) + "'");
    return *p;
  }

  const Passage* find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &passages_[it->second];
  }

  std::span<const Passage> passages() const noexcept { return passages_; }
  std::size_t size() const noexcept { return passages_.size(); }
  bool empty() const noexcept { return passages_.empty(); }

  CorpusStats stats() const {
    CorpusStats s;
    s.num_passages = passages_.size();
    if (passages_.empty()) return s;
    std::size_t total = 0;
    std::unordered_set<std::string> vocab;
    for (const auto& p : passages_) {
      total += p.token_count;
      for (auto& t : tokenize(p.text)) vocab.insert(std::move(t));
    }
    s.avgdl = static_cast<double>(total) / static_cast<double>(passages_.size());
    s.vocab_size = vocab.size();
    return s;
  }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct SquadDataset {
  std::vector<Passage> passages;
  std::vector<QaPair> questions;
};

/// Passage id for the n-th (0-based) paragraph of a SQuAD article.
inline std::string squad_passage_id(std::string_view title, std::size_t paragraph) {
  return std::string(title) + "#" + std::to_string(paragraph);
}

/// SQuAD v1.1 layout: data[] -> paragraphs[] -> {context, qas[] -> {id, question, answers[] -> text}}.
inline SquadDataset parse_squad(const nlohmann::json& root, const std::string& source = "squad") {
  SquadDataset out;
  try {
    const auto& data = root.at("data");
    if (!data.is_array()) throw ParseError(source + ": \"data\" is not an array");
    for (std::size_t a = 0; a < data.size(); ++a) {
      const auto& article = data[a];
      const auto title = article.value("title", std::string("article") + std::to_string(a));
      const auto& paragraphs = article.at("paragraphs");
      for (std::size_t p = 0; p < paragraphs.size(); ++p) {
        const auto& para = paragraphs[p];
        auto passage_id = squad_passage_id(title, p);
        out.passages.push_back(make_passage(passage_id, title, para.at("context").get<std::string>()));
        if (!para.contains("qas")) continue;
        for (const auto& qa : para.at("qas")) {
          QaPair pair;
          pair.id = qa.value("id", std::string());
          pair.question = qa.at("question").get<std::string>();
          for (const auto& ans : qa.at("answers")) pair.gold_answers.push_back(ans.at("text").get<std::string>());
          if (pair.gold_answers.empty()) {
            throw ParseError(source + ": question '" + pair.question + "' has no answers");
          }
          pair.passage_id = passage_id;
          out.questions.push_back(std::move(pair));
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source + ": malformed SQuAD layout: " + e.what());
  }
  if (out.passages.empty()) throw ParseError(source + ": empty dataset");
  return out;
}

inline SquadDataset load_squad(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path.string() + "'");
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_squad(root, path.string());
}

/// Newline-delimited {id?, question, answers: [string...], passage_id?} records.
inline std::vector<QaPair> load_qa_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path.string() + "'");
  std::vector<QaPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      QaPair pair;
      pair.id = j.value("id", std::string());
      pair.question = j.at("question").get<std::string>();
      pair.gold_answers = j.at("answers").get<std::vector<std::string>>();
      if (j.contains("passage_id") && !j["passage_id"].is_null()) pair.passage_id = j["passage_id"].get<std::string>();
      if (pair.gold_answers.empty()) throw ParseError(path.string(), line_no, "\"answers\" is empty");
      out.push_back(std::move(pair));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  if (out.empty()) throw ParseError(path.string() + ": empty dataset");
  return out;
}

/// `.json` is read as SQuAD, anything else as QA JSONL.
inline std::vector<QaPair> load_questions(const std::filesystem::path& path) {
  if (path.extension() == ".json") return load_squad(path).questions;
  return load_qa_jsonl(path);
}

}  // namespace lore
