#include "hbrep/error.hpp"

namespace hbrep {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NotTriangularLength: return "NotTriangularLength";
    case ErrorCode::OpenLoop: return "OpenLoop";
    case ErrorCode::MalformedSequence: return "MalformedSequence";
    case ErrorCode::SelfLoopVertex: return "SelfLoopVertex";
    case ErrorCode::ParameterOutOfRange: return "ParameterOutOfRange";
    case ErrorCode::DegenerateSurface: return "DegenerateSurface";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::DetachedGraph: return "DetachedGraph";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyCandidates: return "EmptyCandidates";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::SamplingExhausted: return "SamplingExhausted";
    case ErrorCode::StageFailed: return "StageFailed";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace hbrep
