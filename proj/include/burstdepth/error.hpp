#pragma once

#include <stdexcept>
#include <string>

namespace burstdepth {

enum class ErrorCode {
  kDegenerateProjection,
  kDegenerateBaseline,
  kInsufficientTracks,
  kNoSeeds,
  kShapeMismatch,
  kNoValidPixels,
  kConfiguration,
  kIo,
};

const char* to_string(ErrorCode code);

/// Base exception for every failure raised by the library. `stage` names the
/// pipeline stage that raised it (empty outside the pipeline).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string stage = {})
      : std::runtime_error(stage.empty() ? message : stage + ": " + message),
        code_(code),
        stage_(std::move(stage)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  ErrorCode code_;
  std::string stage_;
};

}  // namespace burstdepth
