#include "refrm3d/nifti.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace refrm3d {

static_assert(std::endian::native == std::endian::little,
              "NIfTI reader assumes a little-endian host");

namespace {

constexpr int kHeaderSize = 348;
constexpr int kDatatypeU8 = 2;
constexpr int kDatatypeI16 = 4;
constexpr int kDatatypeF32 = 16;

template <typename T>
T read_field(const std::vector<char>& header, std::size_t offset) {
  T value;
  std::memcpy(&value, header.data() + offset, sizeof(T));
  return value;
}

Volume3D read_scalar_field(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) fail(ErrorCode::IoError, "cannot open " + name);

  std::vector<char> header(kHeaderSize);
  in.read(header.data(), kHeaderSize);
  if (in.gcount() != kHeaderSize) {
    fail(ErrorCode::CorruptFile, name + ": file shorter than a NIfTI-1 header");
  }

  if (read_field<std::int32_t>(header, 0) != kHeaderSize) {
    fail(ErrorCode::UnsupportedFormat,
         name + ": sizeof_hdr != 348 (not an uncompressed NIfTI-1 file)");
  }
  if (std::memcmp(header.data() + 344, "n+1\0", 4) != 0) {
    fail(ErrorCode::UnsupportedFormat,
         name + ": magic is not \"n+1\" (only single-file .nii is supported)");
  }

  std::int16_t dim[8];
  std::memcpy(dim, header.data() + 40, sizeof(dim));
  if (dim[0] != 3) {
    fail(ErrorCode::UnsupportedFormat,
         name + ": dim[0] = " + std::to_string(dim[0]) +
             ", only 3-D volumes are supported");
  }
  if (dim[1] <= 0 || dim[2] <= 0 || dim[3] <= 0) {
    fail(ErrorCode::CorruptFile, name + ": nonpositive dimension");
  }

  const std::int16_t datatype = read_field<std::int16_t>(header, 70);
  if (datatype != kDatatypeU8 && datatype != kDatatypeI16 &&
      datatype != kDatatypeF32) {
    fail(ErrorCode::UnsupportedDatatype,
         name + ": datatype " + std::to_string(datatype) +
             " not in {2 (u8), 4 (i16), 16 (f32)}");
  }

  float pixdim[8];
  std::memcpy(pixdim, header.data() + 76, sizeof(pixdim));
  auto spacing_or_one = [](float v) { return v > 0.0f ? v : 1.0f; };

  // dim[1] is the fastest-varying axis on disk, so it maps to width.
  Dims3 dims{dim[3], dim[2], dim[1]};
  Spacing spacing{spacing_or_one(pixdim[1]), spacing_or_one(pixdim[2]),
                  spacing_or_one(pixdim[3])};

  const float vox_offset = read_field<float>(header, 108);
  const float scl_slope = read_field<float>(header, 112);
  const float scl_inter = read_field<float>(header, 116);
  if (!std::isfinite(vox_offset) || vox_offset < 0.0f) {
    fail(ErrorCode::CorruptFile, name + ": invalid vox_offset");
  }
  const std::streamoff data_start =
      std::max<std::streamoff>(352, static_cast<std::streamoff>(vox_offset));

  const std::int64_t count = dims.voxels();
  const std::size_t elem_size = datatype == kDatatypeU8    ? 1
                                : datatype == kDatatypeI16 ? 2
                                                           : 4;
  std::vector<char> raw(static_cast<std::size_t>(count) * elem_size);
  in.seekg(data_start, std::ios::beg);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    fail(ErrorCode::CorruptFile, name + ": truncated voxel payload");
  }

  Volume3D volume(dims, spacing);
  const bool scale = scl_slope != 0.0f;
  for (std::int64_t i = 0; i < count; ++i) {
    float v = 0.0f;
    switch (datatype) {
      case kDatatypeU8:
        v = static_cast<float>(
            static_cast<std::uint8_t>(raw[static_cast<std::size_t>(i)]));
        break;
      case kDatatypeI16: {
        std::int16_t s;
        std::memcpy(&s, raw.data() + i * 2, 2);
        v = static_cast<float>(s);
        break;
      }
      case kDatatypeF32:
        std::memcpy(&v, raw.data() + i * 4, 4);
        break;
    }
    if (scale) v = v * scl_slope + scl_inter;
    if (!std::isfinite(v)) {
      fail(ErrorCode::CorruptFile, name + ": non-finite voxel value");
    }
    volume.data[static_cast<std::size_t>(i)] = v;
  }
  return volume;
}

}  // namespace

Volume3D read_nifti_volume(const std::filesystem::path& path) {
  return read_scalar_field(path);
}

LabelVolume read_nifti_labels(const std::filesystem::path& path) {
  const Volume3D raw = read_scalar_field(path);
  LabelVolume labels(raw.dims, raw.spacing);
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    const float v = raw.data[i];
    const float rounded = std::round(v);
    if (std::fabs(v - rounded) > 1e-6f ||
        !is_valid_label(static_cast<std::uint8_t>(rounded))) {
      fail(ErrorCode::InvalidLabels,
           path.string() + ": voxel value " + std::to_string(v) +
               " is not a label in {0,1,2,4}");
    }
    labels.labels[i] = static_cast<std::uint8_t>(rounded);
  }
  return labels;
}

}  // namespace refrm3d
