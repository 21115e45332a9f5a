#pragma once

#include <stdexcept>
#include <string>

namespace sharnn {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes or ranks that do not fit the requested operation.
struct ShapeError : Error {
    using Error::Error;
};

// API misuse: batch-size change without reset, folding twice, stochastic
// function handed to the gradient checker, and similar.
struct ContractError : Error {
    using Error::Error;
};

// Corpus or batching problems (file too small, batch larger than data, ...).
struct DataError : Error {
    using Error::Error;
};

// Config file problems; the message carries the offending line number.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem failures (open/read/write/rename).
struct IoError : Error {
    using Error::Error;
};

// Checkpoint bytes that do not parse as the expected layout.
struct FormatError : Error {
    using Error::Error;
};

// Checkpoint with a correct layout but an unsupported version.
struct VersionError : FormatError {
    using FormatError::FormatError;
};

// Checkpoint whose checksum does not match its contents.
struct IntegrityError : FormatError {
    using FormatError::FormatError;
};

// Non-finite losses or gradients during optimization.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace sharnn
