#pragma once

#include <stdexcept>
#include <string>

namespace tableqa {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// table-model
class CsvError : public Error {
 public:
  using Error::Error;
};
class EmptyInput : public CsvError {
 public:
  using CsvError::CsvError;
};
class OverlongRow : public CsvError {
 public:
  OverlongRow(std::size_t line, std::size_t cells, std::size_t expected)
      : CsvError("row on line " + std::to_string(line) + " has " + std::to_string(cells) +
                 " cells but the header has " + std::to_string(expected)),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};
class UnbalancedQuote : public CsvError {
 public:
  using CsvError::CsvError;
};

// model-gateway
class GatewayError : public Error {
 public:
  using Error::Error;
};
class TransportError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
class BackendRefusal : public GatewayError {
 public:
  BackendRefusal(int status, const std::string& body)
      : GatewayError("backend rejected request with HTTP " + std::to_string(status) + ": " + body),
        status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};
class EmptyCompletion : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
class UnmappedPrompt : public GatewayError {
 public:
  explicit UnmappedPrompt(const std::string& fingerprint)
      : GatewayError("no scripted response for fingerprint " + fingerprint), fingerprint_(fingerprint) {}
  const std::string& fingerprint() const noexcept { return fingerprint_; }

 private:
  std::string fingerprint_;
};
class InvalidRequest : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
class UnboundPlaceholder : public Error {
 public:
  explicit UnboundPlaceholder(const std::string& name)
      : Error("unbound placeholder: " + name), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

// stages
class EmptyPlan : public Error {
 public:
  using Error::Error;
};
class NoSteps : public Error {
 public:
  using Error::Error;
};
class MissingEntryPoint : public Error {
 public:
  using Error::Error;
};
class ExecutorUnavailable : public Error {
 public:
  using Error::Error;
};

// harness
class ConfigError : public Error {
 public:
  using Error::Error;
};
class ManifestError : public Error {
 public:
  ManifestError(std::size_t line, const std::string& what)
      : Error("manifest line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};
class BundleCorrupt : public Error {
 public:
  using Error::Error;
};

}  // namespace tableqa
