#pragma once

#include <stdexcept>
#include <string>

namespace veriforge {

/// Bad invocation: unknown flag, invalid config value, contract violation by the caller.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problems with input files and their contents.
class DataError : public std::runtime_error {
 public:
  enum class Kind {
    kMissingFile,
    kMalformedHeader,
    kUnsupportedEncoding,
    kEmptyAudio,
    kMalformedLine,
    kDuplicateId,
    kInvalidValue,
    kMismatch,
    kUnwritable,
  };

  DataError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Non-finite values (NaN/Inf) in losses, gradients or activations.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace veriforge
