#pragma once

#include <stdexcept>
#include <string>

namespace covar {

// Base for everything this library throws on bad inputs or bad state.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid argument values (nonpositive prices, out-of-range levels, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(what) {}
};

// Covariance input whose Cholesky pivot drops below tolerance.
class NotPositiveDefinite : public DomainError {
public:
    explicit NotPositiveDefinite(const std::string& what) : DomainError(what) {}
};

// Barrier spot at or above the barrier level.
class KnockedOut : public DomainError {
public:
    explicit KnockedOut(const std::string& what) : DomainError(what) {}
};

// Path bundles fed against a scenario they were not simulated from.
class MismatchedScenario : public DomainError {
public:
    explicit MismatchedScenario(const std::string& what) : DomainError(what) {}
};

// Quadrature failed to reach the requested tolerance.
class IntegrationFailure : public Error {
public:
    explicit IntegrationFailure(const std::string& what) : Error(what) {}
};

class RankDeficient : public Error {
public:
    RankDeficient(const std::string& what, int column) : Error(what), column_(column) {}
    int column() const { return column_; }

private:
    int column_;
};

class FactorizationFailure : public Error {
public:
    explicit FactorizationFailure(const std::string& what) : Error(what) {}
};

class Diverged : public Error {
public:
    explicit Diverged(const std::string& what) : Error(what) {}
};

class DimensionMismatch : public DomainError {
public:
    explicit DimensionMismatch(const std::string& what) : DomainError(what) {}
};

class ShapeMismatch : public DomainError {
public:
    explicit ShapeMismatch(const std::string& what) : DomainError(what) {}
};

class EmptyInput : public DomainError {
public:
    explicit EmptyInput(const std::string& what) : DomainError(what) {}
};

class InfeasibleBudget : public DomainError {
public:
    explicit InfeasibleBudget(const std::string& what) : DomainError(what) {}
};

class VersionMismatch : public Error {
public:
    explicit VersionMismatch(const std::string& what) : Error(what) {}
};

class CorruptArtifact : public Error {
public:
    explicit CorruptArtifact(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

class PrecisionUnreachable : public Error {
public:
    explicit PrecisionUnreachable(const std::string& what) : Error(what) {}
};

class InsufficientPoints : public DomainError {
public:
    explicit InsufficientPoints(const std::string& what) : DomainError(what) {}
};

}  // namespace covar
