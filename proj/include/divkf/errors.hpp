#pragma once

#include <stdexcept>
#include <string>

namespace divkf {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A matrix expected to be symmetric positive definite failed factorization
/// even after the jitter retry.
class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(const std::string& what) : Error(what) {}
};

/// A weighted ensemble has zero total weight or an unrepairable covariance.
class DegenerateEnsemble : public Error {
public:
    explicit DegenerateEnsemble(const std::string& what) : Error(what) {}
};

/// A measurement function or Jacobian was evaluated at a point where it is
/// undefined (e.g. the radar range at the origin).
class SingularPoint : public Error {
public:
    explicit SingularPoint(const std::string& what) : Error(what) {}
};

/// A scalar argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(what) {}
};

/// Mismatched dimensions between operands.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(what) {}
};

/// Invalid or inconsistent experiment configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

/// Filesystem failure while emitting results.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace divkf
