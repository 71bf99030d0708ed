#pragma once

#include <stdexcept>

namespace stam {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
struct DimensionError : Error {
    using Error::Error;
};

// Out-of-range operation argument (stride, window, period, ...).
struct ParameterError : Error {
    using Error::Error;
};

// Caller broke an API contract (non-scalar loss, bad label, empty input).
struct ContractError : Error {
    using Error::Error;
};

// Bad run configuration; the CLI maps this to exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem or serialization failure; CLI exit code 3.
struct IoError : Error {
    using Error::Error;
};

// Required dataset/checkpoint/sample does not exist; CLI exit code 4.
struct MissingInputError : Error {
    using Error::Error;
};

// Checkpoint load failures, one type per failure mode.
struct CheckpointMagicError : IoError {
    using IoError::IoError;
};
struct CheckpointTruncatedError : IoError {
    using IoError::IoError;
};
struct CheckpointMismatchError : IoError {
    using IoError::IoError;
};

}  // namespace stam
