#pragma once

#include <stdexcept>
#include <string>

namespace cns {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two operands live on different torus grids.
class GridMismatch : public Error {
public:
    GridMismatch() : Error("grid mismatch between operands") {}
};

/// Argument outside the documented domain of an operation.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Experiment configuration violates the schema. `path()` names the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& what)
        : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Initial data violates positivity of n0 or c0.
class InitialDataError : public Error {
public:
    InitialDataError(const std::string& field, double minimum)
        : Error("initial " + field + " is not strictly positive (min = " + std::to_string(minimum) + ")"),
          field_(field), minimum_(minimum) {}
    const std::string& field() const noexcept { return field_; }
    double minimum() const noexcept { return minimum_; }

private:
    std::string field_;
    double minimum_;
};

class CorruptPayload : public Error {
public:
    using Error::Error;
};

class VersionMismatch : public Error {
public:
    using Error::Error;
};

/// A step produced NaN or Inf.
class NonFiniteState : public Error {
public:
    using Error::Error;
};

/// Output could not be written.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace cns
