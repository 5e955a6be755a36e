#pragma once

#include <stdexcept>
#include <string>

namespace dsdg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class UnsupportedElementError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class AssemblyError : public Error {
public:
    using Error::Error;
};

class LayoutError : public Error {
public:
    using Error::Error;
};

class SingularMassError : public Error {
public:
    using Error::Error;
};

class CoercivityError : public Error {
public:
    using Error::Error;
};

/// Raised by iterative solvers (non-convergence, indefinite operator, failed factorization).
class SolverError : public Error {
public:
    using Error::Error;
};

class IndefiniteMatrixError : public SolverError {
public:
    using SolverError::SolverError;
};

/// Explicit time stepping left its stability region.
class InstabilityError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class DeadlockError : public Error {
public:
    using Error::Error;
};

}  // namespace dsdg
