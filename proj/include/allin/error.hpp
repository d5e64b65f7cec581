#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace allin {

// Process exit codes used by the CLI.
enum class ExitCode : int { kOk = 0, kUsage = 1, kIntegrity = 2, kConfig = 3 };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kUsage; }
};

// Invalid numeric input: non-finite or out-of-range effect, probability, e-value.
class DomainError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

// Bad configuration: weights, alpha levels, missing endpoints.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

// Ledger content that cannot be replayed: ordering, unknown trials, malformed lines.
class LedgerError : public Error {
 public:
  LedgerError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  ExitCode exit_code() const noexcept override { return ExitCode::kIntegrity; }

 private:
  std::size_t line_;
};

class IntegrityError : public LedgerError {
 public:
  using LedgerError::LedgerError;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace allin
