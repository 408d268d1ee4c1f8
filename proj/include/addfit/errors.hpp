#pragma once

#include <stdexcept>
#include <string>

namespace addfit {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inconsistent dimensions, bad parameter counts, invalid model structure.
class StructureError : public Error {
public:
    using Error::Error;
};

// Argument outside its mathematical domain (omega <= 0, zeta >= 1, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Evaluation at a pole (omega = 0 with integrators, A(j omega) = 0).
class SingularityError : public Error {
public:
    using Error::Error;
};

// Malformed input file; the message names the offending line or record.
class ParseError : public Error {
public:
    using Error::Error;
};

// Linear solve failed or the system matrix is too ill-conditioned.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double condition)
        : Error(what), condition_(condition) {}
    double condition() const { return condition_; }

private:
    double condition_;
};

}  // namespace addfit
