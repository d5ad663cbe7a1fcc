#pragma once

#include <stdexcept>
#include <string>

namespace harmscope {

// Base for every error the toolkit raises on purpose. The CLI maps the
// subclasses onto exit codes; anything else is treated as internal.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad caller-supplied data: out-of-range values, empty samples, unknown levels.
class InputError : public Error {
public:
    using Error::Error;
};

// Malformed file contents (CSV headers, schema lines, report JSON).
class FormatError : public InputError {
public:
    using InputError::InputError;
};

class IoError : public InputError {
public:
    using InputError::InputError;
};

// Design matrix problems: too few levels, rank deficiency, no residual df.
class DesignError : public Error {
public:
    using Error::Error;
};

// Optimizer gave up. Carries the best iterate seen so far.
class FitError : public Error {
public:
    FitError(const std::string& what, double best_log_lambda, double best_criterion)
        : Error(what), best_log_lambda_(best_log_lambda), best_criterion_(best_criterion) {}

    double best_log_lambda() const noexcept { return best_log_lambda_; }
    double best_criterion() const noexcept { return best_criterion_; }

private:
    double best_log_lambda_;
    double best_criterion_;
};

class AuditError : public Error {
public:
    using Error::Error;
};

class ComparisonError : public Error {
public:
    using Error::Error;
};

}  // namespace harmscope
