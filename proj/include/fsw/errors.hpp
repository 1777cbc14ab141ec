#pragma once

#include <stdexcept>
#include <string>

namespace fsw {

// Error taxonomy used across the workbench. The CLI maps these onto its
// exit-code contract (2 = bad input, 3 = I/O, 4 = capacity).
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("format error: " + msg) {}
};

struct SpaceError : Error {
    explicit SpaceError(const std::string& msg) : Error("color-space error: " + msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

struct CapacityError : Error {
    explicit CapacityError(const std::string& msg) : Error("capacity error: " + msg) {}
};

struct BatchTooSmall : Error {
    explicit BatchTooSmall(const std::string& msg) : Error("batch too small: " + msg) {}
};

struct UnknownAlgorithm : Error {
    explicit UnknownAlgorithm(const std::string& msg) : Error("unknown algorithm: " + msg) {}
};

struct EmptyTrainSet : Error {
    explicit EmptyTrainSet(const std::string& msg) : Error("empty train set: " + msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

}  // namespace fsw
