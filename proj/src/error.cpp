#include "burstdepth/error.hpp"

namespace burstdepth {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDegenerateProjection: return "degenerate-projection";
    case ErrorCode::kDegenerateBaseline: return "degenerate-baseline";
    case ErrorCode::kInsufficientTracks: return "insufficient-tracks";
    case ErrorCode::kNoSeeds: return "no-seeds";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kNoValidPixels: return "no-valid-pixels";
    case ErrorCode::kConfiguration: return "configuration";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace burstdepth
