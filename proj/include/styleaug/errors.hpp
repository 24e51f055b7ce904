#pragma once

#include <stdexcept>
#include <string>

namespace styleaug {

/// Broad failure category. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kUsage,    // bad arguments or configuration
  kData,     // unreadable, malformed or inconsistent inputs
  kNumeric,  // optimizer or training failed numerically
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define STYLEAUG_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  }

STYLEAUG_DEFINE_ERROR(ShapeMismatch, kData);
STYLEAUG_DEFINE_ERROR(UnknownTag, kData);
STYLEAUG_DEFINE_ERROR(FormatError, kData);
STYLEAUG_DEFINE_ERROR(IoError, kData);
STYLEAUG_DEFINE_ERROR(InsufficientPool, kData);
STYLEAUG_DEFINE_ERROR(ConfigError, kUsage);
STYLEAUG_DEFINE_ERROR(StepSizeError, kNumeric);
STYLEAUG_DEFINE_ERROR(NumericError, kNumeric);

#undef STYLEAUG_DEFINE_ERROR

/// Image decoding failure. `reason` is a short machine-readable code such as
/// "UnsupportedBitDepth" or "NotPng".
class DecodeError : public Error {
 public:
  DecodeError(std::string reason, const std::string& what)
      : Error(ErrorKind::kData, what), reason_(std::move(reason)) {}

  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
};

}  // namespace styleaug
