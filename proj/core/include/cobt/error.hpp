#pragma once

#include <stdexcept>
#include <string>

namespace cobt {

/// Exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kValidation = 2,
  kExecution = 3,
  kBudget = 4,
};

/// Base error. `module()` names the pipeline stage that raised it.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }
  virtual ExitCode exit_code() const noexcept { return ExitCode::kValidation; }

 private:
  std::string module_;
};

/// Input rejected: malformed files, violated preconditions, unknown ids.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Something went wrong while executing a tree against the world.
class ExecutionError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kExecution; }
};

class BudgetExhausted : public ExecutionError {
 public:
  using ExecutionError::ExecutionError;
  ExitCode exit_code() const noexcept override { return ExitCode::kBudget; }
};

}  // namespace cobt
