#include "cammotion/error.hpp"

namespace cammotion {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::MissingParameter: return "missing-parameter";
    case ErrorKind::InvalidPose: return "invalid-pose";
    case ErrorKind::InvalidDepth: return "invalid-depth";
    case ErrorKind::EmptyCloud: return "empty-cloud";
    case ErrorKind::NoOverlap: return "no-overlap";
    case ErrorKind::ScheduleInconsistency: return "schedule-inconsistency";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Io: return "io";
    case ErrorKind::Stage: return "stage";
    }
    return "unknown";
}

} // namespace cammotion
