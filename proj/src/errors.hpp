#pragma once

#include <stdexcept>
#include <string>

namespace icp2p {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Rejected input: wrong shapes, bad sizes, invalid arguments.
struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error("shape: " + what) {}
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error("numeric: " + what) {}
};

// Config file problems; line 0 means "not tied to a line".
struct ConfigError : Error {
    ConfigError(int line_no, const std::string& what)
        : Error(line_no > 0 ? "config line " + std::to_string(line_no) + ": " + what
                            : "config: " + what),
          line(line_no) {}
    int line;
};

// Illegal protocol event for the current node state.
struct ProtocolError : Error {
    explicit ProtocolError(const std::string& what) : Error("protocol: " + what) {}
};

} // namespace icp2p
