#pragma once

/** \file dense_index.hpp
 *  \brief Exact cosine-similarity search over unit-normalized embeddings.
 */

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "lore/error.hpp"
#include "lore/ranked_list.hpp"

namespace lore {

using Vector = std::vector<double>;

struct EmbeddingRecord {
  std::string passage_id;
  Vector vector;
};

inline double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// Throws on zero or non-finite input.
inline Vector normalized(std::span<const double> v) {
  const double norm = l2_norm(v);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw Error("cannot normalize a zero or non-finite vector");
  Vector out(v.begin(), v.end());
  for (auto& x : out) x /= norm;
  return out;
}

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error("dimension mismatch: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  if (nu == 0.0 || nv == 0.0) throw Error("cosine of a zero vector is undefined");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

class DenseIndex {
 public:
  static constexpr std::string_view kMagic = "LOREIDX1 dense";

  static DenseIndex build(std::vector<EmbeddingRecord> records) {
    if (records.empty()) throw Error("cannot build a dense index without vectors");
    DenseIndex index;
    index.dim_ = records.front().vector.size();
    if (index.dim_ == 0) throw Error("embedding dimension must be >= 1");
    std::unordered_set<std::string> seen;
    for (auto& r : records) {
      if (r.vector.size() != index.dim_) {
        throw Error("embedding for '" + r.passage_id + "' has dimension " + std::to_string(r.vector.size()) +
                    ", expected " + std::to_string(index.dim_));
      }
      if (!seen.insert(r.passage_id).second) throw Error("duplicate embedding id '" + r.passage_id + "'");
      try {
        r.vector = normalized(r.vector);
      } catch (const Error&) {
        throw Error("embedding for '" + r.passage_id + "' is a zero vector");
      }
    }
    index.records_ = std::move(records);
    return index;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return records_.size(); }
  std::span<const EmbeddingRecord> records() const noexcept { return records_; }

  /// Top-n by cosine; ties by ascending passage id. Scores are dot products of unit vectors.
  RankedList search(std::span<const double> query, std::size_t n) const {
    if (n == 0) throw Error("search depth must be >= 1");
    if (query.size() != dim_) {
      throw Error("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                  std::to_string(dim_));
    }
    const auto q = normalized(query);
    std::vector<std::pair<std::string, double>> hits;
    hits.reserve(records_.size());
    for (const auto& r : records_) hits.emplace_back(r.passage_id, std::clamp(dot(q, r.vector), -1.0, 1.0));
    const auto keep = std::min(n, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), ranks_before);
    hits.resize(keep);
    return make_ranked_list("dense", std::move(hits));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write dense index '" + path.string() + "'");
    out << kMagic << '\n';
    out << nlohmann::ordered_json{{"dim", dim_}, {"num_records", records_.size()}}.dump() << '\n';
    for (const auto& r : records_) out << nlohmann::ordered_json{{"id", r.passage_id}, {"vector", r.vector}}.dump() << '\n';
    if (!out) throw Error("failed writing dense index '" + path.string() + "'");
  }

  /// Stored vectors are already unit length; they are loaded as-is.
  static DenseIndex load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dense index '" + path.string() + "'");
    const auto source = path.string();
    std::string line;
    if (!std::getline(in, line) || line != kMagic) throw ParseError(source, 1, "bad magic, expected 'LOREIDX1 dense'");
    DenseIndex index;
    std::size_t line_no = 2;
    try {
      if (!std::getline(in, line)) throw ParseError(source, 2, "missing header");
      const auto header = nlohmann::json::parse(line);
      index.dim_ = header.at("dim").get<std::size_t>();
      const auto expected = header.at("num_records").get<std::size_t>();
      std::unordered_set<std::string> seen;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto row = nlohmann::json::parse(line);
        EmbeddingRecord r{row.at("id").get<std::string>(), row.at("vector").get<Vector>()};
        if (r.vector.size() != index.dim_) throw ParseError(source, line_no, "vector dimension mismatch");
        if (!seen.insert(r.passage_id).second) throw ParseError(source, line_no, "duplicate id");
        index.records_.push_back(std::move(r));
      }
      if (index.records_.size() != expected) throw ParseError(source, line_no, "num_records does not match body");
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (index.records_.empty()) throw ParseError(source + ": dense index has no records");
    return index;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<EmbeddingRecord> records_;
};

/// Reads {id, vector: [number...]} JSONL. Dimensions must agree across lines.
inline std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings file '" + path.string() + "'");
  const auto source = path.string();
  std::vector<EmbeddingRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    EmbeddingRecord r;
    try {
      const auto row = nlohmann::json::parse(line);
      r.passage_id = row.at("id").get<std::string>();
      const auto& vec = row.at("vector");
      if (!vec.is_array()) throw ParseError(source, line_no, "\"vector\" is not an array");
      for (const auto& x : vec) {
        if (!x.is_number()) throw ParseError(source, line_no, "\"vector\" contains a non-number");
        r.vector.push_back(x.get<double>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (r.vector.empty()) throw ParseError(source, line_no, "empty vector");
    if (!records.empty() && r.vector.size() != records.front().vector.size()) {
      throw ParseError(source, line_no,
                       "inconsistent dimension " + std::to_string(r.vector.size()) + ", expected " +
                           std::to_string(records.front().vector.size()));
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw ParseError(source + ": no embeddings found");
  return records;
}

inline void save_embeddings(const std::filesystem::path& path, std::span<const EmbeddingRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& r : records) out << nlohmann::ordered_json{{"id", r.passage_id}, {"vector", r.vector}}.dump() << '\n';
}

}  // namespace lore
