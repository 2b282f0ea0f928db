#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sdp {

// Error taxonomy mapped to CLI exit codes in tools/sdp_main.cpp.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io: " + msg) {}
};

// Expensive invariant scans (finiteness after every op, binarity of spike
// trains) are gated at runtime so the training loop can turn them off.
// Cheap shape checks are always on.
bool runtime_checks_enabled();
void set_runtime_checks(bool on);

}  // namespace sdp
