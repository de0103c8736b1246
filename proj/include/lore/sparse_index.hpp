#pragma once

/** \file sparse_index.hpp
 *  \brief Unigram inverted index with Okapi BM25 scoring.
 *
 *  score(q, d) = sum over query tokens t of
 *      idf(t) * f(t,d) * (k1 + 1) / (f(t,d) + k1 * (1 - b + b * |d| / avgdl))
 *  with idf(t) = ln(1 + (N - n_t + 0.5) / (n_t + 0.5)), which is always positive.
 *  Repeated query tokens contribute once per occurrence.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lore/corpus.hpp"
#include "lore/error.hpp"
#include "lore/ranked_list.hpp"
#include "lore/text.hpp"

namespace lore {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;

  void validate() const {
    if (!(k1 > 0.0) || !std::isfinite(k1)) throw Error("bm25 k1 must be > 0");
    if (!(b >= 0.0 && b <= 1.0)) throw Error("bm25 b must lie in [0, 1]");
  }
};

struct Posting {
  std::uint32_t doc = 0;  // ordinal into SparseIndex::doc_id()
  std::uint32_t term_frequency = 0;
};

class SparseIndex {
 public:
  static constexpr std::string_view kMagic = "LOREIDX1 sparse";

  static SparseIndex build(const Corpus& corpus, Bm25Params params = {}) {
    params.validate();
    if (corpus.empty()) throw Error("cannot build a sparse index over an empty corpus");
    SparseIndex index;
    index.params_ = params;
    std::size_t total = 0;
    for (const auto& passage : corpus.passages()) {
      const auto doc = static_cast<std::uint32_t>(index.doc_ids_.size());
      const auto tokens = tokenize(passage.text);
      index.doc_ids_.push_back(passage.id);
      index.doc_lengths_.push_back(tokens.size());
      index.ordinal_.emplace(passage.id, doc);
      total += tokens.size();
      std::map<std::string_view, std::uint32_t> counts;
      for (const auto& t : tokens) ++counts[t];
      for (const auto& [term, tf] : counts) index.postings_[std::string(term)].push_back({doc, tf});
    }
    index.avgdl_ = static_cast<double>(total) / static_cast<double>(index.doc_ids_.size());
    return index;
  }

  std::size_t num_docs() const noexcept { return doc_ids_.size(); }
  double avgdl() const noexcept { return avgdl_; }
  const Bm25Params& params() const noexcept { return params_; }
  std::size_t vocab_size() const noexcept { return postings_.size(); }
  const std::string& doc_id(std::uint32_t doc) const { return doc_ids_.at(doc); }

  std::size_t doc_length(std::string_view passage_id) const { return doc_lengths_[ordinal(passage_id)]; }

  /// Empty span for unseen terms.
  std::span<const Posting> postings(std::string_view term) const {
    auto it = postings_.find(term);
    if (it == postings_.end()) return {};
    return it->second;
  }

  std::size_t document_frequency(std::string_view term) const { return postings(term).size(); }

  double idf(std::string_view term) const {
    const auto n = static_cast<double>(document_frequency(term));
    const auto total = static_cast<double>(num_docs());
    return std::log(1.0 + (total - n + 0.5) / (n + 0.5));
  }

  double score(std::span<const std::string> query_tokens, std::string_view passage_id) const {
    const auto doc = ordinal(passage_id);
    double sum = 0.0;
    for (const auto& term : query_tokens) {
      const auto list = postings(term);
      auto it = std::lower_bound(list.begin(), list.end(), doc,
                                 [](const Posting& p, std::uint32_t d) { return p.doc < d; });
      if (it == list.end() || it->doc != doc) continue;
      sum += term_weight(idf(term), it->term_frequency, doc_lengths_[doc]);
    }
    return sum;
  }

  /// Top-n passages with score > 0; descending score, ties by ascending passage id.
  RankedList search(std::string_view query, std::size_t n) const {
    if (n == 0) throw Error("search depth must be >= 1");
    const auto tokens = tokenize(query);
    std::unordered_map<std::uint32_t, double> acc;
    for (const auto& term : tokens) {
      const auto list = postings(term);
      if (list.empty()) continue;
      const double w = idf(term);
      for (const auto& p : list) acc[p.doc] += term_weight(w, p.term_frequency, doc_lengths_[p.doc]);
    }
    std::vector<std::pair<std::string, double>> hits;
    hits.reserve(acc.size());
    for (const auto& [doc, s] : acc) {
      if (s > 0.0) hits.emplace_back(doc_ids_[doc], s);
    }
    const auto keep = std::min(n, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), ranks_before);
    hits.resize(keep);
    return make_ranked_list("bm25", std::move(hits));
  }

  /// Line 1 magic, line 2 header, then one line per term in lexicographic order.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write sparse index '" + path.string() + "'");
    out << kMagic << '\n';
    nlohmann::ordered_json header{{"num_docs", num_docs()}, {"avgdl", avgdl_}, {"k1", params_.k1}, {"b", params_.b}};
    nlohmann::json ids = doc_ids_;
    header["doc_ids"] = std::move(ids);
    out << header.dump() << '\n';
    for (const auto& [term, list] : postings_) {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& p : list) rows.push_back({doc_ids_[p.doc], p.term_frequency});
      nlohmann::ordered_json line{{"term", term}, {"postings", std::move(rows)}};
      out << line.dump() << '\n';
    }
    if (!out) throw Error("failed writing sparse index '" + path.string() + "'");
  }

  static SparseIndex load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open sparse index '" + path.string() + "'");
    const auto source = path.string();
    std::string line;
    if (!std::getline(in, line) || line != kMagic) throw ParseError(source, 1, "bad magic, expected 'LOREIDX1 sparse'");
    SparseIndex index;
    std::size_t line_no = 2;
    try {
      if (!std::getline(in, line)) throw ParseError(source, 2, "missing header");
      const auto header = nlohmann::json::parse(line);
      index.params_.k1 = header.at("k1").get<double>();
      index.params_.b = header.at("b").get<double>();
      index.params_.validate();
      index.avgdl_ = header.at("avgdl").get<double>();
      index.doc_ids_ = header.at("doc_ids").get<std::vector<std::string>>();
      if (index.doc_ids_.size() != header.at("num_docs").get<std::size_t>()) {
        throw ParseError(source, 2, "num_docs does not match doc_ids");
      }
      for (std::uint32_t d = 0; d < index.doc_ids_.size(); ++d) {
        if (!index.ordinal_.emplace(index.doc_ids_[d], d).second) throw ParseError(source, 2, "duplicate doc id");
      }
      index.doc_lengths_.assign(index.doc_ids_.size(), 0);
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto row = nlohmann::json::parse(line);
        auto& list = index.postings_[row.at("term").get<std::string>()];
        for (const auto& p : row.at("postings")) {
          const auto doc = index.ordinal(p.at(0).get<std::string>());
          const auto tf = p.at(1).get<std::uint32_t>();
          if (tf == 0) throw ParseError(source, line_no, "term frequency must be >= 1");
          list.push_back({doc, tf});
          index.doc_lengths_[doc] += tf;
        }
        std::sort(list.begin(), list.end(), [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(source, line_no, e.what());
    }
    return index;
  }

 private:
  std::uint32_t ordinal(std::string_view passage_id) const {
    auto it = ordinal_.find(std::string(passage_id));
    if (it == ordinal_.end()) throw Error("unknown passage id '" + std::string(passage_id) + "'");
    return it->second;
  }

  double term_weight(double idf, std::uint32_t tf, std::size_t length) const {
    const auto f = static_cast<double>(tf);
    const auto norm = 1.0 - params_.b + params_.b * static_cast<double>(length) / avgdl_;
    return idf * f * (params_.k1 + 1.0) / (f + params_.k1 * norm);
  }

  Bm25Params params_;
  double avgdl_ = 0.0;
  std::vector<std::string> doc_ids_;
  std::vector<std::size_t> doc_lengths_;
  std::unordered_map<std::string, std::uint32_t> ordinal_;
  std::map<std::string, std::vector<Posting>, std::less<>> postings_;
};

}  // namespace lore
