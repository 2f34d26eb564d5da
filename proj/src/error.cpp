#include "cca/error.hpp"

namespace cca {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::BadMagic: return "bad-magic";
    case ErrorKind::UnsupportedVersion: return "unsupported-version";
    case ErrorKind::UnsupportedDtype: return "unsupported-dtype";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::ShotCount: return "shot-count";
    case ErrorKind::ZeroRow: return "zero-row";
    case ErrorKind::RankDeficient: return "rank-deficient";
    case ErrorKind::Singular: return "singular";
    case ErrorKind::NumericFailure: return "numeric-failure";
  }
  return "unknown";
}

int Error::exit_code() const {
  switch (kind_) {
    case ErrorKind::RankDeficient:
    case ErrorKind::Singular:
    case ErrorKind::NumericFailure:
    case ErrorKind::ZeroRow:
      return 3;
    default:
      return 2;
  }
}

}  // namespace cca
