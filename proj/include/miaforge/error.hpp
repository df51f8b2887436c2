#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace miaforge {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (archive, embeddings, CSV, config).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A statistic is undefined on the given input (single-class labels,
/// constant scores, zero rank variance).
class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what,
                           std::vector<std::string> offenders = {})
      : Error(what), offenders_(std::move(offenders)) {}

  const std::vector<std::string>& offenders() const noexcept {
    return offenders_;
  }

 private:
  std::vector<std::string> offenders_;
};

/// The request needs a provider capability that is not available
/// (e.g. concatenated-prefix queries on a file-backed archive).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// A scoring method cannot run on this archive (missing token records,
/// missing labels, ...).
class MethodUnavailableError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace miaforge
