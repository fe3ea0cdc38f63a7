#pragma once

#include <stdexcept>
#include <string>

namespace sofr {

enum class ErrorKind {
  DependentInput,
  NotIdentifiable,
  NotInSubspace,
  NotOrthonormal,
  RankDeficient,
  SingularCovariance,
  UnsupportedProcess,
  BadTruncation,
  DegenerateEigenvalue,
  AssumptionViolated,
  NotNested,
  BadDimension,
  BadSchedule,
  IoError,
  ConfigError,
  ParseError,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::DependentInput: return "DependentInput";
    case ErrorKind::NotIdentifiable: return "NotIdentifiable";
    case ErrorKind::NotInSubspace: return "NotInSubspace";
    case ErrorKind::NotOrthonormal: return "NotOrthonormal";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::UnsupportedProcess: return "UnsupportedProcess";
    case ErrorKind::BadTruncation: return "BadTruncation";
    case ErrorKind::DegenerateEigenvalue: return "DegenerateEigenvalue";
    case ErrorKind::AssumptionViolated: return "AssumptionViolated";
    case ErrorKind::NotNested: return "NotNested";
    case ErrorKind::BadDimension: return "BadDimension";
    case ErrorKind::BadSchedule: return "BadSchedule";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every recoverable failure in the library is a sofr::Error carrying its kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when A^T A has an eigenvalue at or below the identifiability tolerance.
class NotIdentifiableError : public Error {
 public:
  NotIdentifiableError(double min_eigenvalue, double tol)
      : Error(ErrorKind::NotIdentifiable,
              "min eigenvalue of A^T A = " + std::to_string(min_eigenvalue) +
                  " <= tol " + std::to_string(tol)),
        min_eigenvalue_(min_eigenvalue) {}

  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

}  // namespace sofr
