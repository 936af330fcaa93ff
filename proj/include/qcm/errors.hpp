// errors.hpp — error categories shared across the library and the CLI

#pragma once

#include <stdexcept>
#include <string>

namespace qcm {

// Bad run parameters (grids, trajectory counts, flags).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Ill-formed or inconsistent model descriptions.
struct ModelError : std::runtime_error {
    explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical contract violations at runtime (tolerances exceeded, unstable steps).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace qcm
