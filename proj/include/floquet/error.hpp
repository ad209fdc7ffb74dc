#pragma once

#include <stdexcept>
#include <string>

namespace floquet {

/// Domain errors come from bad input; numerical errors from algorithms that
/// could not deliver. The CLI maps them to exit codes 1 and 2.
enum class ErrorCategory { domain, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}
    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(ErrorCategory::domain, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorCategory::numerical, what) {}
};

#define FLOQUET_ERROR(Name, Base, prefix)                                    \
    class Name : public Base {                                               \
    public:                                                                  \
        explicit Name(const std::string& what) : Base(prefix + what) {}      \
    };

FLOQUET_ERROR(MalformedSpec, DomainError, "malformed spec: ")
FLOQUET_ERROR(DegenerateMeanMatrix, DomainError, "degenerate mean matrix: ")
FLOQUET_ERROR(TruncationTooSmall, DomainError, "truncation too small: ")
FLOQUET_ERROR(OverlappingWindows, DomainError, "overlapping windows: ")
FLOQUET_ERROR(EpsilonTooLarge, DomainError, "epsilon too large: ")
FLOQUET_ERROR(InvalidArgument, DomainError, "invalid argument: ")
FLOQUET_ERROR(FormatError, DomainError, "format error: ")

FLOQUET_ERROR(EigensolveFailure, NumericalError, "eigensolve failure: ")
FLOQUET_ERROR(IntegratorFailure, NumericalError, "integrator failure: ")
FLOQUET_ERROR(NoConvergence, NumericalError, "no convergence: ")
FLOQUET_ERROR(MultiplicityUnstable, NumericalError, "multiplicity unstable: ")
FLOQUET_ERROR(AmbiguousMatching, NumericalError, "ambiguous matching: ")
FLOQUET_ERROR(WindowContaminated, NumericalError, "window contaminated: ")
FLOQUET_ERROR(NotCauchy, NumericalError, "not Cauchy: ")

#undef FLOQUET_ERROR

}  // namespace floquet
