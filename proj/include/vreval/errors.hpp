#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace vreval {

// Root of the harness error hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- domain ----
class AmbiguousCategory : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class LabelError : public Error { public: using Error::Error; };
class CategoryError : public Error { public: using Error::Error; };
class EmptyRule : public Error { public: using Error::Error; };

// ---- datasets ----
class ManifestError : public Error {
 public:
  ManifestError(std::string message, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};
class InsufficientSources : public Error { public: using Error::Error; };
class InsufficientPool : public Error { public: using Error::Error; };

// ---- backends ----
class BackendError : public Error { public: using Error::Error; };
class TransportError : public BackendError { public: using BackendError::BackendError; };
class AuthError : public BackendError { public: using BackendError::BackendError; };
class RateLimitError : public BackendError {
 public:
  RateLimitError(std::string message, double retry_after_s)
      : BackendError(std::move(message)), retry_after_s_(retry_after_s) {}
  double retry_after_s() const { return retry_after_s_; }

 private:
  double retry_after_s_;
};
class OversizePayloadError : public BackendError { public: using BackendError::BackendError; };
class ReplayMiss : public BackendError {
 public:
  ReplayMiss(std::string message, std::string nearest)
      : BackendError(std::move(message)), nearest_(std::move(nearest)) {}
  // Registered fingerprint closest to the missed one (diagnostic aid).
  const std::string& nearest() const { return nearest_; }

 private:
  std::string nearest_;
};
class DecodeError : public Error { public: using Error::Error; };
class InputError : public Error { public: using Error::Error; };

// ---- prompting ----
class ParamError : public Error { public: using Error::Error; };
class EmptyField : public Error { public: using Error::Error; };
class CountMismatch : public Error { public: using Error::Error; };

// ---- paradigms ----
class CapabilityError : public Error { public: using Error::Error; };
class SummaryExtractionError : public Error { public: using Error::Error; };
class SchemaError : public Error { public: using Error::Error; };
class MissingDescription : public Error {
 public:
  explicit MissingDescription(std::string content_hash)
      : Error("no description for image " + content_hash),
        content_hash_(std::move(content_hash)) {}
  const std::string& content_hash() const { return content_hash_; }

 private:
  std::string content_hash_;
};
class ChoiceParseError : public Error { public: using Error::Error; };

// ---- analysis ----
class UnparseableReply : public Error {
 public:
  explicit UnparseableReply(std::string raw, std::string reason = "no usable Conclusion field")
      : Error(std::move(reason)), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};
class EmptyInput : public Error { public: using Error::Error; };
class DimensionMismatch : public Error { public: using Error::Error; };
class ZeroVector : public Error { public: using Error::Error; };
class MissingCategory : public Error { public: using Error::Error; };

// ---- runstore / reporting / cli ----
class DuplicateRecord : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class ManifestMissing : public Error { public: using Error::Error; };
class UnknownGrouping : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

}  // namespace vreval
