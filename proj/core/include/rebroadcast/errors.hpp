#pragma once

#include <stdexcept>
#include <string>

namespace rebroadcast {

// Every failure raised by the library derives from Error, so callers that do
// not care about the kind can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Image or kernel sizes that cannot be combined.
class DimensionError : public Error {
public:
    using Error::Error;
};

// An argument outside its documented domain (even kernel size, bad sigma...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Input that is well-formed but carries no usable information
// (empty valid region, too few distinct points, all-zero feature).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

// Classifier training could not proceed (single class, mismatched sizes).
class TrainingError : public Error {
public:
    using Error::Error;
};

// Filesystem failures; the message always names the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

// Persisted model container problems. Each kind is distinct so tools can
// report them precisely.
class FormatError : public Error {
public:
    using Error::Error;
};

class UnsupportedVersionError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
public:
    using FormatError::FormatError;
};

class InvariantViolationError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace rebroadcast
