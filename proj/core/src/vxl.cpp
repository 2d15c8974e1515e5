#include "refrm3d/vxl.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace refrm3d {

static_assert(std::endian::native == std::endian::little,
              "VXL1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'V', 'X', 'L', '1'};

void require(bool ok, ErrorCode code, const std::string& message) {
  if (!ok) fail(code, message);
}

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  require(in.good(), ErrorCode::CorruptFile, path + ": truncated header");
  return value;
}

Dims3 dims_from_u32(std::uint32_t d, std::uint32_t h, std::uint32_t w) {
  return Dims3{static_cast<std::int64_t>(d), static_cast<std::int64_t>(h),
               static_cast<std::int64_t>(w)};
}

}  // namespace

std::size_t vxl_dtype_size(VxlDtype dtype) {
  switch (dtype) {
    case VxlDtype::F32: return 4;
    case VxlDtype::U8: return 1;
    case VxlDtype::I16: return 2;
  }
  fail(ErrorCode::UnsupportedDatatype, "unknown VXL1 dtype code");
}

std::uint64_t VxlArray::element_count() const {
  std::uint64_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

void write_vxl_array(const std::filesystem::path& path, const VxlArray& array) {
  require(array.dims.size() == 3 || array.dims.size() == 4,
          ErrorCode::ShapeError, "VXL1 arrays are 3-D or 4-D");
  for (std::uint32_t d : array.dims) {
    require(d > 0, ErrorCode::ShapeError, "VXL1 dims must be positive");
  }
  require(array.payload.size() ==
              array.element_count() * vxl_dtype_size(array.dtype),
          ErrorCode::ShapeError, "VXL1 payload size does not match dims");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::IoError,
          "cannot open " + path.string() + " for writing");

  out.write(kMagic, 4);
  write_raw(out, static_cast<std::uint8_t>(array.dtype));
  write_raw(out, static_cast<std::uint8_t>(array.dims.size()));
  const std::uint8_t reserved[2] = {0, 0};
  out.write(reinterpret_cast<const char*>(reserved), 2);
  for (std::uint32_t d : array.dims) write_raw(out, d);
  write_raw(out, array.spacing.dx);
  write_raw(out, array.spacing.dy);
  write_raw(out, array.spacing.dz);
  out.write(reinterpret_cast<const char*>(array.payload.data()),
            static_cast<std::streamsize>(array.payload.size()));
  require(out.good(), ErrorCode::IoError, "write failed for " + path.string());
}

VxlArray read_vxl_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open " + path.string());
  const std::string name = path.string();

  char magic[4];
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, kMagic, 4) == 0,
          ErrorCode::CorruptFile, name + ": bad magic, not a VXL1 file");

  const auto dtype_code = read_raw<std::uint8_t>(in, name);
  require(dtype_code <= 2, ErrorCode::UnsupportedDatatype,
          name + ": unknown dtype code " + std::to_string(int(dtype_code)));
  const auto ndim = read_raw<std::uint8_t>(in, name);
  require(ndim == 3 || ndim == 4, ErrorCode::CorruptFile,
          name + ": ndim must be 3 or 4, got " + std::to_string(int(ndim)));
  std::uint8_t reserved[2];
  in.read(reinterpret_cast<char*>(reserved), 2);
  require(in.good() && reserved[0] == 0 && reserved[1] == 0,
          ErrorCode::CorruptFile, name + ": reserved bytes must be zero");

  VxlArray array;
  array.dtype = static_cast<VxlDtype>(dtype_code);
  array.dims.resize(ndim);
  for (auto& d : array.dims) {
    d = read_raw<std::uint32_t>(in, name);
    require(d > 0, ErrorCode::CorruptFile, name + ": zero dimension");
  }
  array.spacing.dx = read_raw<float>(in, name);
  array.spacing.dy = read_raw<float>(in, name);
  array.spacing.dz = read_raw<float>(in, name);

  const std::uint64_t bytes =
      array.element_count() * vxl_dtype_size(array.dtype);
  require(bytes <= std::numeric_limits<std::size_t>::max() / 2,
          ErrorCode::CorruptFile, name + ": implausible payload size");
  array.payload.resize(static_cast<std::size_t>(bytes));
  in.read(reinterpret_cast<char*>(array.payload.data()),
          static_cast<std::streamsize>(bytes));
  require(in.gcount() == static_cast<std::streamsize>(bytes),
          ErrorCode::CorruptFile, name + ": truncated payload");
  in.peek();
  require(in.eof(), ErrorCode::CorruptFile,
          name + ": trailing bytes after payload");
  return array;
}

void write_vxl(const std::filesystem::path& path, const Volume3D& volume) {
  volume.validate();
  VxlArray array;
  array.dtype = VxlDtype::F32;
  array.dims = {static_cast<std::uint32_t>(volume.dims.d),
                static_cast<std::uint32_t>(volume.dims.h),
                static_cast<std::uint32_t>(volume.dims.w)};
  array.spacing = volume.spacing;
  array.payload.resize(volume.data.size() * sizeof(float));
  std::memcpy(array.payload.data(), volume.data.data(), array.payload.size());
  write_vxl_array(path, array);
}

void write_vxl(const std::filesystem::path& path, const LabelVolume& labels) {
  labels.validate();
  VxlArray array;
  array.dtype = VxlDtype::U8;
  array.dims = {static_cast<std::uint32_t>(labels.dims.d),
                static_cast<std::uint32_t>(labels.dims.h),
                static_cast<std::uint32_t>(labels.dims.w)};
  array.spacing = labels.spacing;
  array.payload.assign(labels.labels.begin(), labels.labels.end());
  write_vxl_array(path, array);
}

void write_vxl(const std::filesystem::path& path,
               const MultiChannelVolume& volume) {
  volume.validate();
  const Dims3& dims = volume.dims();
  VxlArray array;
  array.dtype = VxlDtype::F32;
  array.dims = {static_cast<std::uint32_t>(volume.channel_count()),
                static_cast<std::uint32_t>(dims.d),
                static_cast<std::uint32_t>(dims.h),
                static_cast<std::uint32_t>(dims.w)};
  array.spacing = volume.spacing();
  const std::size_t channel_bytes = volume.channels[0].data.size() * 4;
  array.payload.resize(channel_bytes * volume.channels.size());
  for (std::size_t c = 0; c < volume.channels.size(); ++c) {
    std::memcpy(array.payload.data() + c * channel_bytes,
                volume.channels[c].data.data(), channel_bytes);
  }
  write_vxl_array(path, array);
}

Volume3D read_vxl_volume(const std::filesystem::path& path) {
  const VxlArray array = read_vxl_array(path);
  require(array.dims.size() == 3, ErrorCode::ShapeError,
          path.string() + ": expected a 3-D scalar volume");
  require(array.dtype == VxlDtype::F32, ErrorCode::UnsupportedDatatype,
          path.string() + ": expected f32 payload");
  Volume3D volume(dims_from_u32(array.dims[0], array.dims[1], array.dims[2]),
                  array.spacing);
  std::memcpy(volume.data.data(), array.payload.data(), array.payload.size());
  volume.validate();
  return volume;
}

LabelVolume read_vxl_labels(const std::filesystem::path& path) {
  const VxlArray array = read_vxl_array(path);
  require(array.dims.size() == 3, ErrorCode::ShapeError,
          path.string() + ": expected a 3-D label volume");
  require(array.dtype == VxlDtype::U8, ErrorCode::UnsupportedDatatype,
          path.string() + ": expected u8 payload");
  LabelVolume labels(dims_from_u32(array.dims[0], array.dims[1], array.dims[2]),
                     array.spacing);
  labels.labels.assign(array.payload.begin(), array.payload.end());
  labels.validate();
  return labels;
}

MultiChannelVolume read_vxl_multichannel(const std::filesystem::path& path) {
  const VxlArray array = read_vxl_array(path);
  require(array.dims.size() == 4, ErrorCode::ShapeError,
          path.string() + ": expected a 4-D multi-channel volume");
  require(array.dtype == VxlDtype::F32, ErrorCode::UnsupportedDatatype,
          path.string() + ": expected f32 payload");
  const Dims3 dims = dims_from_u32(array.dims[1], array.dims[2], array.dims[3]);
  MultiChannelVolume volume;
  const std::size_t channel_bytes =
      static_cast<std::size_t>(dims.voxels()) * 4;
  for (std::uint32_t c = 0; c < array.dims[0]; ++c) {
    Volume3D channel(dims, array.spacing);
    std::memcpy(channel.data.data(), array.payload.data() + c * channel_bytes,
                channel_bytes);
    volume.channels.push_back(std::move(channel));
  }
  volume.validate();
  return volume;
}

}  // namespace refrm3d
