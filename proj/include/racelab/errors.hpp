#pragma once

#include <stdexcept>
#include <string>

namespace racelab {

// Thrown when a speed-bump design cell has no supported formula or is
// outside the region a formula is known to be valid on.
struct unsupported_design : std::domain_error {
    explicit unsupported_design(const std::string& what) : std::domain_error(what) {}
};

// Configuration-file or option problems: the request itself is malformed.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// File-system failures distinct from bad inputs.
struct io_error : std::runtime_error {
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace racelab
