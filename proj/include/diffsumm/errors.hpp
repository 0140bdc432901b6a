#pragma once

#include <stdexcept>
#include <string>

namespace diffsumm {

// Errors that mean "the caller handed us something invalid". The CLI maps
// these to exit code 1; everything else derived from std::exception maps to 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class StepError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DataError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Runtime failures: non-finite arithmetic, I/O trouble, corrupt files.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace diffsumm
