#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hbrep {

enum class ErrorCode {
  IndexOutOfRange,
  NotTriangularLength,
  OpenLoop,
  MalformedSequence,
  SelfLoopVertex,
  ParameterOutOfRange,
  DegenerateSurface,
  EmptySet,
  RankDeficient,
  NotScalar,
  DetachedGraph,
  ShapeMismatch,
  EmptyCandidates,
  InvalidRange,
  SamplingExhausted,
  StageFailed,
  ParseError,
  VersionUnsupported,
  IoError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Library failures are reported through this exception type and callers
// branch on code(). The pipeline's StageFailed adds a partial trace.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hbrep
