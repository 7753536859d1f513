#pragma once

#include <stdexcept>
#include <string>

namespace feel {

/// Argument outside the domain of an operation (negative rate, zero distance, ...).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed to converge or bracket.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A gradient was uploaded by a device that had zero scheduling probability.
class SchedulingError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// No device can be scheduled: every gradient is zero. Callers treat this as
/// a converged-or-stalled signal.
class StarvationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Step-size constants violate 2*mu*chi > 1.
class AssumptionViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Learning task could not be built (singular Hessian, optimum search stalled).
class ConstructionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace feel
