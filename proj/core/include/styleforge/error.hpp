#pragma once

#include <stdexcept>
#include <string>

namespace styleforge {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument (shape, size, range) was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Configuration problems: invalid ArchConfig, bad training config file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File system failures (open, read, write).
class IoError : public Error {
 public:
  using Error::Error;
};

enum class ParseErrc {
  bad_magic,
  unsupported_version,
  unsupported_maxval,
  bad_dimensions,
  truncated,
  trailing_data,
  checksum_mismatch,
  missing_tensor,
  shape_mismatch,
  malformed,
};

const char* to_string(ParseErrc code);

/// Decoding failure of one of the binary formats (KSTM, .flo, PPM/PGM).
class ParseError : public Error {
 public:
  ParseError(ParseErrc code, const std::string& what)
      : Error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ParseErrc code() const noexcept { return code_; }

 private:
  ParseErrc code_;
};

}  // namespace styleforge
