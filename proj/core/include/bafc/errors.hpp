#pragma once

#include <stdexcept>
#include <string>

namespace bafc {

// Error categories map onto the CLI exit codes: Config -> 2,
// Shape/Data -> 3, Training -> 4.
enum class ErrorKind {
    shape,
    config,
    data,
    training,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(ErrorKind::shape, msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

// Malformed files, corrupt streams, out-of-range values, bad inputs.
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& msg) : Error(ErrorKind::training, msg) {}
};

} // namespace bafc
