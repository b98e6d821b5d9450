#pragma once

#include <stdexcept>
#include <string>

namespace pvvolt {

// Base of all library errors. Messages follow "<module>.<operation>: detail"
// so callers can surface the failing site without unwinding by hand.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or parameters (CLI exit code 2).
class ConfigError : public Error {
    using Error::Error;
};

// Malformed or inconsistent input data (CLI exit code 3).
class DataError : public Error {
    using Error::Error;
};

// Numerical failure at runtime (CLI exit code 4).
class NumericError : public Error {
    using Error::Error;
};

// -- data errors --------------------------------------------------------

class ParseError : public DataError {
    using DataError::DataError;
};

class ShapeError : public DataError {
    using DataError::DataError;
};

class RangeError : public DataError {
    using DataError::DataError;
};

class IndexError : public DataError {
    using DataError::DataError;
};

class NonMonotonic : public DataError {
    using DataError::DataError;
};

// -- numeric errors ------------------------------------------------------

class NonPositiveSquaredVoltage : public NumericError {
    using NumericError::NumericError;
};

class NonPositiveVoltage : public NumericError {
    using NumericError::NumericError;
};

class ZeroMatrix : public NumericError {
    using NumericError::NumericError;
};

class ZeroVector : public NumericError {
    using NumericError::NumericError;
};

class DomainError : public NumericError {
    using NumericError::NumericError;
};

class DegenerateSample : public NumericError {
    using NumericError::NumericError;
};

class NonPositiveSample : public NumericError {
    using NumericError::NumericError;
};

class NoConvergence : public NumericError {
    using NumericError::NumericError;
};

class EmptyDistribution : public NumericError {
    using NumericError::NumericError;
};

class EmptyConditioningSet : public NumericError {
    using NumericError::NumericError;
};

class DivisionNearZero : public NumericError {
    using NumericError::NumericError;
};

class AllZeroPower : public NumericError {
    using NumericError::NumericError;
};

}  // namespace pvvolt
