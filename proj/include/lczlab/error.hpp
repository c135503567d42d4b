#pragma once

#include <stdexcept>
#include <string>

namespace lcz {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Numeric argument outside its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Inconsistent model, grouping or experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input data (labels, targets, non-finite values).
class DataError : public Error {
public:
    using Error::Error;
};

/// Operation invoked in the wrong state (e.g. optimizer step without gradients).
class StateError : public Error {
public:
    using Error::Error;
};

/// On-disk payload does not match its manifest.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Checksum mismatch.
class CorruptionError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// A metric whose value is undefined for the given confusion matrix.
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

}  // namespace lcz
