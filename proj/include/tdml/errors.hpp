#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

// Argument and shape violations are reported with std::invalid_argument.
// The classes below cover the remaining failure kinds callers may want to
// tell apart.

namespace tdml {

// A vector whose norm is below the normalization guard.
class DegenerateInputError : public std::runtime_error {
 public:
  DegenerateInputError(const std::string& what, std::size_t row)
      : std::runtime_error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// A mini-batch without any (anchor, positive, negative) triple.
class NoValidTripletError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A query whose class has no other member in the database.
class UndefinedQueryError : public std::runtime_error {
 public:
  UndefinedQueryError(const std::string& what, std::vector<std::string> ids)
      : std::runtime_error(what), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

// Malformed binary file; offset is the byte position where reading failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// Malformed CSV; row is the 1-based line number in the file.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : std::runtime_error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tdml
