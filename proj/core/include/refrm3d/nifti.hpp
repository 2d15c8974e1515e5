#pragma once

#include <filesystem>

#include "refrm3d/volume.hpp"

namespace refrm3d {

// Minimal NIfTI-1 ingestion: uncompressed single-file .nii, 3-D, datatypes
// u8 / i16 / f32. Values are returned as an f32 scalar field with
// scl_slope / scl_inter applied when scl_slope is nonzero. Spacing comes
// from pixdim[1..3]; nonpositive entries fall back to 1.0.
Volume3D read_nifti_volume(const std::filesystem::path& path);

// Same parsing path, then validates that every value is one of {0, 1, 2, 4}.
LabelVolume read_nifti_labels(const std::filesystem::path& path);

}  // namespace refrm3d
