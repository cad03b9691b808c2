#include "gazekit/error.hpp"

namespace gazekit {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidCamera: return "InvalidCamera";
    case ErrorKind::InvalidEllipse: return "InvalidEllipse";
    case ErrorKind::InvalidDirection: return "InvalidDirection";
    case ErrorKind::BehindCamera: return "BehindCamera";
    case ErrorKind::DegenerateEllipse: return "DegenerateEllipse";
    case ErrorKind::InvalidFrame: return "InvalidFrame";
    case ErrorKind::InvalidMask: return "InvalidMask";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::DegenerateCalibration: return "DegenerateCalibration";
    case ErrorKind::InsufficientCalibration: return "InsufficientCalibration";
    case ErrorKind::ModelNotFitted: return "ModelNotFitted";
    case ErrorKind::DegenerateAlignment: return "DegenerateAlignment";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::TargetUnviewable: return "TargetUnviewable";
    case ErrorKind::MissingMeta: return "MissingMeta";
    case ErrorKind::EmptyWindow: return "EmptyWindow";
    case ErrorKind::BadTimestamps: return "BadTimestamps";
    case ErrorKind::BadRecord: return "BadRecord";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace gazekit
