#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bumpy {

/// Base class of every error raised by the library. Messages carry the
/// module tag, e.g. "[cell] ...".
class Error : public std::runtime_error {
public:
  Error(const std::string& module, const std::string& what)
      : std::runtime_error("[" + module + "] " + what), module_(module) {}

  const std::string& module() const noexcept { return module_; }

private:
  std::string module_;
};

/// Invalid input: parameters, ranges, resolutions, shapes.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// An iterative or direct solve failed to reach its tolerance.
class SolverError : public Error {
public:
  SolverError(const std::string& module, const std::string& what,
              std::vector<double> residual_history)
      : Error(module, what), history_(std::move(residual_history)) {}

  const std::vector<double>& residual_history() const noexcept { return history_; }

private:
  std::vector<double> history_;
};

}  // namespace bumpy
