#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ktraj {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or missing configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data failed a quality gate, e.g. too many unparseable rows (exit code 1).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A model cannot be identified from the data.
class ModelError : public Error {
 public:
  ModelError(const std::string& what, std::vector<std::string> columns = {})
      : Error(what), columns_(std::move(columns)) {}

  /// Offending design-matrix columns (collinear or constant), if known.
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

}  // namespace ktraj
