#pragma once

#include <stdexcept>
#include <string>

namespace dvc {

enum class ErrorKind {
  invalid_argument,
  shape_mismatch,
  non_finite,
  bad_format,
  io,
  too_few_samples,
  singular,
  degenerate,
  duplicate_id,
  not_converged,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::shape_mismatch:   return "shape mismatch";
    case ErrorKind::non_finite:       return "non-finite value";
    case ErrorKind::bad_format:       return "bad format";
    case ErrorKind::io:               return "i/o failure";
    case ErrorKind::too_few_samples:  return "too few samples";
    case ErrorKind::singular:         return "singular matrix";
    case ErrorKind::degenerate:       return "degenerate input";
    case ErrorKind::duplicate_id:     return "duplicate id";
    case ErrorKind::not_converged:    return "not converged";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace dvc
