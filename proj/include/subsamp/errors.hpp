#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace subsamp {

// Base of all library failures. `name()` is the stable identifier printed by
// the CLI and asserted in tests.
class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& what)
        : std::runtime_error(what), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

// Problems with input data or files (CLI exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

// Numerical / algorithmic failures (CLI exit code 3).
class NumericError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(std::int64_t line, const std::string& what)
        : DataError("Parse", "line " + std::to_string(line) + ": " + what), line(line) {}
    std::int64_t line;
};

class SchemaMismatchError : public DataError {
public:
    explicit SchemaMismatchError(const std::string& what) : DataError("SchemaMismatch", what) {}
};

class DomainError : public NumericError {
public:
    explicit DomainError(const std::string& what, std::int64_t row = -1)
        : NumericError("Domain", row >= 0 ? "row " + std::to_string(row) + ": " + what : what),
          row(row) {}
    std::int64_t row;  // offending data row, -1 if not row specific
};

class SingularHessianError : public NumericError {
public:
    explicit SingularHessianError(double cond_estimate)
        : NumericError("SingularHessian",
                       "Hessian numerically singular (rcond ~ " + std::to_string(cond_estimate) + ")"),
          rcond(cond_estimate) {}
    double rcond;
};

class NonConvergenceError : public NumericError {
public:
    NonConvergenceError(int iterations, bool diverged)
        : NumericError("NonConvergence",
                       diverged ? "iterate norm diverged monotonically after " +
                                      std::to_string(iterations) + " iterations (separation?)"
                                : "no convergence after " + std::to_string(iterations) + " iterations"),
          iterations(iterations), diverged(diverged) {}
    int iterations;
    bool diverged;  // monotone divergence of the iterate norm
};

class SingularGramError : public NumericError {
public:
    explicit SingularGramError(double cond_estimate)
        : NumericError("SingularGram",
                       "weighted Gram matrix singular (rcond ~ " + std::to_string(cond_estimate) + ")"),
          rcond(cond_estimate) {}
    double rcond;
};

class InvalidDistributionError : public NumericError {
public:
    explicit InvalidDistributionError(const std::string& what)
        : NumericError("InvalidDistribution", what) {}
};

class AllZeroNormsError : public NumericError {
public:
    AllZeroNormsError() : NumericError("AllZeroNorms", "all gradient norms are zero") {}
};

class NoValidGError : public NumericError {
public:
    explicit NoValidGError(std::int64_t s_n)
        : NumericError("NoValidG", "threshold scan exhausted g in [0, " + std::to_string(s_n) +
                                       "); preconditions violated") {}
};

class EmptyPilotError : public NumericError {
public:
    EmptyPilotError() : NumericError("EmptyPilot", "Poisson pilot subsample is empty") {}
};

class ZeroPsiError : public NumericError {
public:
    ZeroPsiError() : NumericError("ZeroPsi", "all pilot gradient norms are zero") {}
};

class ZeroProbNonzeroGradError : public NumericError {
public:
    explicit ZeroProbNonzeroGradError(std::int64_t row)
        : NumericError("ZeroProbNonzeroGrad",
                       "row " + std::to_string(row) + " has zero probability but nonzero gradient"),
          row(row) {}
    std::int64_t row;
};

class EmptySecondStageError : public NumericError {
public:
    EmptySecondStageError() : NumericError("EmptySecondStage", "second-stage subsample is empty") {}
};

class SingularCombinationError : public NumericError {
public:
    SingularCombinationError()
        : NumericError("SingularCombination", "aggregation matrix s0*H0 + s1*H1 is singular") {}
};

}  // namespace subsamp
