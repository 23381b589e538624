#pragma once

#include <stdexcept>
#include <string>

namespace vicon {

// Categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  Config,      // invalid configuration, bad arguments, violated preconditions
  Data,        // malformed or inconsistent input data
  Divergence,  // training produced non-finite values
  Io,          // filesystem failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

// Wrong magic / unsupported version in a binary file.
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

// Header parsed but payload truncated or inconsistent with it.
struct CorruptFileError : Error {
  explicit CorruptFileError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct NonFiniteError : Error {
  explicit NonFiniteError(const std::string& what) : Error(ErrorKind::Divergence, what) {}
};

/// Exit code used by the command-line tool for each error category.
int exit_code(ErrorKind kind) noexcept;

}  // namespace vicon
