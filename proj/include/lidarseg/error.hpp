#pragma once

#include <stdexcept>
#include <string>

namespace lidarseg {

enum class ErrorCode {
    MalformedFrame,
    MalformedPoint,
    Parse,
    MissingCalibration,
    InvalidCalibration,
    Argument,
    InsufficientPoints,
    DegenerateGeometry,
    EmptyInput,
    EmptyCluster,
    EmptyData,
    Imbalance,
    Arity,
    Format,
    UndefinedMetric,
    Config,
    Io,
};

const char* to_string(ErrorCode code);

/// Single exception type for the library; `code()` distinguishes failure kinds.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace lidarseg
