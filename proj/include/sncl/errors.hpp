#pragma once

#include <stdexcept>
#include <string>

namespace sncl {

/// Base of every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shapes that do not fit together.
struct StructuralError : Error {
    using Error::Error;
};

/// Unknown head, mask, parameter or record.
struct LookupError : Error {
    using Error::Error;
};

/// API used in the wrong order (e.g. backward before forward).
struct UsageError : Error {
    using Error::Error;
};

/// Hyperparameter outside its domain.
struct ParameterError : Error {
    using Error::Error;
};

/// Sessions trained out of order or a one-shot step repeated.
struct SequencingError : Error {
    using Error::Error;
};

/// Malformed or infeasible data.
struct DataError : Error {
    using Error::Error;
};

/// Non-finite values.
struct NumericError : Error {
    using Error::Error;
};

/// File could not be opened, read or written.
struct IoError : Error {
    using Error::Error;
};

/// Bytes that do not parse as the expected container.
struct FormatError : Error {
    using Error::Error;
};

/// Invalid configuration; the message carries the offending field path.
struct ValidationError : Error {
    ValidationError(const std::string& field, const std::string& what)
        : Error(field + ": " + what), field_path(field) {}
    std::string field_path;
};

}  // namespace sncl
