#pragma once

#include <stdexcept>
#include <string>

namespace bsvm {

/// Malformed or unusable input data (CSV parsing, label problems, ...).
class IngestError : public std::runtime_error {
 public:
  explicit IngestError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure during model computation (non-finite objective,
/// Cholesky breakdown, ...).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration (flag combinations, degenerate class counts, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bsvm
