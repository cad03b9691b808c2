#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gazekit {

enum class ErrorKind {
    InvalidCamera,
    InvalidEllipse,
    InvalidDirection,
    BehindCamera,
    DegenerateEllipse,
    InvalidFrame,
    InvalidMask,
    InvalidParams,
    DegenerateCalibration,
    InsufficientCalibration,
    ModelNotFitted,
    DegenerateAlignment,
    EmptyGroup,
    TargetUnviewable,
    MissingMeta,
    EmptyWindow,
    BadTimestamps,
    BadRecord,
    ConfigError,
    IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-readable kind so the
/// batch runner can tabulate it per cell.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace gazekit
