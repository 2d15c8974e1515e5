#include "refrm3d/errors.hpp"

namespace refrm3d {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::InvalidLabels: return "InvalidLabels";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::NoTumor: return "NoTumor";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::OpenMesh: return "OpenMesh";
    case ErrorCode::InvalidGeometry: return "InvalidGeometry";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DivergenceError: return "DivergenceError";
    case ErrorCode::MissingPrerequisite: return "MissingPrerequisite";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "UnknownError";
}

}  // namespace refrm3d
