#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace edgedet {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or an ill-formed graph handed to an operation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable external data: model containers, images, labels.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::uint64_t byte_offset)
      : DataError(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace edgedet
