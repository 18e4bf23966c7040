#pragma once

#include <stdexcept>
#include <string>

namespace deep_energy {

/// Malformed or inconsistent input data (files, shapes, seed codes).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// An iterative solve failed to reach its tolerance, or the system is singular.
class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace deep_energy
