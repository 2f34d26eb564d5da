#pragma once

#include <stdexcept>
#include <string>

namespace cca {

enum class ErrorKind {
  Io,
  BadMagic,
  UnsupportedVersion,
  UnsupportedDtype,
  Truncated,
  NonFinite,
  InvalidArgument,
  DimensionMismatch,
  ShotCount,
  ZeroRow,
  RankDeficient,
  Singular,
  NumericFailure,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  // 2 for I/O and validation failures, 3 for numeric ones.
  int exit_code() const;

 private:
  ErrorKind kind_;
};

}  // namespace cca
