#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lore {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when one applies.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

/// Transport or protocol failure talking to the inference sidecar. Retryable.
class ReaderError : public Error {
 public:
  using Error::Error;
};

/// Neither retriever produced a single candidate context for the query.
class NoEvidenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace lore
