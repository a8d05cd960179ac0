#pragma once

#include <stdexcept>
#include <string>

namespace gcum {

// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf surfaced in a forward value or a gradient.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"), offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class MissingCheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace gcum
