#pragma once

#include <stdexcept>
#include <string>

namespace lorasb {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Caller handed us something that violates a precondition (bad shape,
// non-finite entries, out-of-range rank, malformed file, ...).
class InvalidInputError : public Error {
public:
    explicit InvalidInputError(const std::string& what) : Error(what) {}
};

// An iterative kernel failed to meet its tolerance. Carries how many
// iterations (sweeps) ran before giving up.
class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string& what, long iterations)
        : Error(what + " (iterations: " + std::to_string(iterations) + ")"),
          iterations_(iterations) {}
    long iterations() const noexcept { return iterations_; }

private:
    long iterations_ = 0;
};

// Matrix that must be invertible (or a factor that must be full rank)
// is singular or too ill conditioned. Carries the condition estimate.
class SingularityError : public Error {
public:
    SingularityError(const std::string& what, double condition_estimate)
        : Error(what + " (condition estimate: " + std::to_string(condition_estimate) + ")"),
          condition_(condition_estimate) {}
    double condition_estimate() const noexcept { return condition_; }

private:
    double condition_ = 0.0;
};

// Strict-mode training abort: a per-step invariant failed. Carries the step.
class InvariantViolation : public Error {
public:
    InvariantViolation(const std::string& what, int step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_ = 0;
};

// File/serialization problems distinct from semantic input errors.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace lorasb
