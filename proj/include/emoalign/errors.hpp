#pragma once

#include <stdexcept>
#include <string>

namespace emoalign {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration document or value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed text where structured output was expected.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

/// Remote judge unreachable or returned an error after all retries.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// File-format or filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace emoalign
