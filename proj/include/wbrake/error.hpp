#pragma once

#include <stdexcept>
#include <string>

namespace wbrake {

// Bad or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mass reached the outermost cells: the truncated domain is too small.
struct GridTooSmall : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An iterative solve ran out of iterations (CLI exit code 3).
struct NonConvergence : std::runtime_error {
    NonConvergence(const std::string& what, double residual)
        : std::runtime_error(what), residual(residual) {}
    double residual;
};

// A checked property failed at runtime (CLI exit code 4).
struct InvariantFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace wbrake
