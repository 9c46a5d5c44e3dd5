#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qfisher {

enum class ErrorKind {
  ParameterOutOfDomain,
  InvalidSample,
  SingularParameter,
  NumericalIntegration,
  EmptyBin,
  ProtocolInvalid,
  ExactComputationInfeasible,
  InfeasibleEnumeration,
  InsufficientNodes,
  InsufficientData,
  InvalidArgument,
  Configuration,
  Parse,
  Unsupported,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Configuration error that remembers the offending JSON path.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(ErrorKind::Configuration, path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace qfisher
