#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace headsplat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments or values that violate a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input file. Carries the file path and the byte
/// offset where decoding stopped (or -1 when not applicable).
class ParseError : public Error {
 public:
  ParseError(std::string file, std::int64_t offset, const std::string& what)
      : Error(format(file, offset, what)), file_(std::move(file)), offset_(offset) {}

  const std::string& file() const { return file_; }
  std::int64_t offset() const { return offset_; }

 private:
  static std::string format(const std::string& file, std::int64_t offset, const std::string& what) {
    std::string msg = file;
    if (offset >= 0) msg += " @" + std::to_string(offset);
    return msg + ": " + what;
  }

  std::string file_;
  std::int64_t offset_;
};

/// Optimization blew up (loss grew past the divergence bound).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace headsplat
