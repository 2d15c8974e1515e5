#pragma once

#include <stdexcept>
#include <string>

namespace refrm3d {

// Failure categories surfaced by the pipeline. Recoverable per-case
// conditions (EmptyMask, NoTumor, ...) are caught at the dataset layer and
// recorded in manifests; the rest abort the operation that raised them.
enum class ErrorCode {
  IoError,
  UnsupportedFormat,
  UnsupportedDatatype,
  CorruptFile,
  InvalidLabels,
  ShapeError,
  EmptyMask,
  NoTumor,
  EmptyRegion,
  OpenMesh,
  InvalidGeometry,
  EmptyDataset,
  InsufficientData,
  DivergenceError,
  MissingPrerequisite,
  ConfigError,
};

const char* error_code_name(ErrorCode code);

class PipelineError : public std::runtime_error {
 public:
  PipelineError(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw PipelineError(code, message);
}

}  // namespace refrm3d
