#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace remedi {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised by ingest when one or more records are invalid. The whole batch is
/// rejected; `problems()` carries one "line N: reason" entry per defect.
class IngestError : public Error {
public:
  explicit IngestError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
  std::vector<std::string> problems_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class InvariantViolation : public Error {
public:
  using Error::Error;
};

class ProtocolError : public Error {
public:
  using Error::Error;
};

class TrainerFailed : public Error {
public:
  TrainerFailed(const std::string& what, std::string log_path)
      : Error(what), log_path_(std::move(log_path)) {}
  const std::string& log_path() const noexcept { return log_path_; }

private:
  std::string log_path_;
};

}  // namespace remedi
