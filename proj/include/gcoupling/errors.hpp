#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gcoupling {

/// Base of every library error. `module()` names the component that raised
/// it so command-line drivers can report provenance.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Invalid argument for a mathematical operation (mismatched spaces,
/// non-probability vectors, zero-measure regions, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The requested quantity has no closed form for this model.
class UnsupportedModel : public Error {
 public:
  using Error::Error;
};

/// Quadrature failed to reach its tolerance.
class IntegrationError : public Error {
 public:
  using Error::Error;
};

/// A path that the kernel assigns zero density at some index.
class InadmissiblePath : public Error {
 public:
  InadmissiblePath(std::int64_t index, const std::string& what)
      : Error("governor", what), index_(index) {}
  std::int64_t index() const noexcept { return index_; }

 private:
  std::int64_t index_;
};

/// A Monte Carlo budget ran out before a result could be produced.
class InsufficientReplicas : public Error {
 public:
  using Error::Error;
};

}  // namespace gcoupling
