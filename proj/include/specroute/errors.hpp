#pragma once

#include <stdexcept>
#include <string>

namespace specroute {

// One exception family for the whole library; callers that care about the
// category catch the specific type, the CLI maps any of them to a message
// plus a nonzero exit status.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

// Graph shape makes the requested computation ill-posed (disconnected,
// degree-0 node, partition too small to train on).
struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& what) : std::runtime_error(what) {}
};

struct ConvergenceError : std::runtime_error {
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), achieved_residual(residual) {}
    double achieved_residual;
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace specroute
