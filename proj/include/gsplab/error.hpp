#pragma once

#include <stdexcept>
#include <string>

namespace gsplab {

// Process exit codes used by the CLI: 0 success, 1 usage, 2 data, 3 numeric.
enum class ErrorClass { Usage = 1, Data = 2, Numeric = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& msg)
        : std::runtime_error(msg), cls_(cls) {}
    ErrorClass error_class() const { return cls_; }
    int exit_code() const { return static_cast<int>(cls_); }

private:
    ErrorClass cls_;
};

// Shape or size of an argument does not fit the operation.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(ErrorClass::Data, "dimension error: " + msg) {}
};

// Inconsistent or invalid configuration values.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(ErrorClass::Usage, "config error: " + msg) {}
};

// A file exists but its contents do not parse as the expected format.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(ErrorClass::Data, "format error: " + msg) {}
};

// Missing files, unreadable datasets, out-of-bounds annotations.
class LoadError : public Error {
public:
    explicit LoadError(const std::string& msg) : Error(ErrorClass::Data, "load error: " + msg) {}
};

// Annotations required by an operation are absent.
class AnnotationError : public Error {
public:
    explicit AnnotationError(const std::string& msg) : Error(ErrorClass::Data, "annotation error: " + msg) {}
};

class GeometryError : public Error {
public:
    explicit GeometryError(const std::string& msg) : Error(ErrorClass::Data, "geometry error: " + msg) {}
};

// Object placement could not satisfy the scene constraints.
class CapacityError : public Error {
public:
    explicit CapacityError(const std::string& msg) : Error(ErrorClass::Data, "capacity error: " + msg) {}
};

// Non-finite values, diverged training.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(ErrorClass::Numeric, "numeric error: " + msg) {}
};

// Training cannot proceed (divergence, no usable samples).
class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& msg) : Error(ErrorClass::Numeric, "training error: " + msg) {}
};

// Dataset-level problems that are not a single file's fault (e.g. empty split).
class DatasetError : public Error {
public:
    explicit DatasetError(const std::string& msg) : Error(ErrorClass::Data, "dataset error: " + msg) {}
};

// An API precondition was violated by the caller.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(ErrorClass::Numeric, "contract error: " + msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(ErrorClass::Data, "io error: " + msg) {}
};

} // namespace gsplab
