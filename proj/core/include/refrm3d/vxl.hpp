#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "refrm3d/volume.hpp"

namespace refrm3d {

// VXL1 container: fixed 8-byte header (magic "VXL1", dtype code, ndim,
// two reserved zero bytes), ndim little-endian u32 dims outermost first,
// 3 little-endian f32 spacing values (dx, dy, dz), then the raw C-order
// payload. No padding, no compression.
enum class VxlDtype : std::uint8_t { F32 = 0, U8 = 1, I16 = 2 };

std::size_t vxl_dtype_size(VxlDtype dtype);

// Low-level view of a VXL1 file; payload bytes are preserved verbatim so
// round trips are bit-exact for every dtype.
struct VxlArray {
  VxlDtype dtype = VxlDtype::F32;
  std::vector<std::uint32_t> dims;  // size 3, or 4 with leading channel axis
  Spacing spacing;
  std::vector<std::uint8_t> payload;

  std::uint64_t element_count() const;
};

void write_vxl_array(const std::filesystem::path& path, const VxlArray& array);
VxlArray read_vxl_array(const std::filesystem::path& path);

// Typed convenience wrappers used by the pipeline stages.
void write_vxl(const std::filesystem::path& path, const Volume3D& volume);
void write_vxl(const std::filesystem::path& path, const LabelVolume& labels);
void write_vxl(const std::filesystem::path& path,
               const MultiChannelVolume& volume);

Volume3D read_vxl_volume(const std::filesystem::path& path);
LabelVolume read_vxl_labels(const std::filesystem::path& path);
MultiChannelVolume read_vxl_multichannel(const std::filesystem::path& path);

}  // namespace refrm3d
