#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "refrm3d/errors.hpp"

namespace refrm3d {

// Grid dimensions in C order: (depth, height, width). The fastest-varying
// axis is width. Physical spacing is kept in (dx, dy, dz) order, so
// spacing[0] belongs to the width axis and spacing[2] to the depth axis.
struct Dims3 {
  std::int64_t d = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t voxels() const { return d * h * w; }
  bool operator==(const Dims3&) const = default;
};

struct Spacing {
  float dx = 1.0f;
  float dy = 1.0f;
  float dz = 1.0f;

  bool operator==(const Spacing&) const = default;
};

inline std::int64_t linear_index(const Dims3& dims, std::int64_t z,
                                 std::int64_t y, std::int64_t x) {
  return (z * dims.h + y) * dims.w + x;
}

std::string dims_to_string(const Dims3& dims);

// Scalar field on a regular grid, stored as f32 in C order.
struct Volume3D {
  Dims3 dims;
  Spacing spacing;
  std::vector<float> data;

  Volume3D() = default;
  Volume3D(Dims3 dims_, Spacing spacing_, float fill = 0.0f)
      : dims(dims_), spacing(spacing_),
        data(static_cast<std::size_t>(dims_.voxels()), fill) {}

  float& at(std::int64_t z, std::int64_t y, std::int64_t x) {
    return data[static_cast<std::size_t>(linear_index(dims, z, y, x))];
  }
  float at(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return data[static_cast<std::size_t>(linear_index(dims, z, y, x))];
  }

  void validate() const;  // dims/data agreement, positive spacing, finite data
};

// Segmentation labels restricted to {0, 1, 2, 4}.
inline constexpr std::array<std::uint8_t, 4> kValidLabels = {0, 1, 2, 4};

inline bool is_valid_label(std::uint8_t v) {
  return v == 0 || v == 1 || v == 2 || v == 4;
}

struct LabelVolume {
  Dims3 dims;
  Spacing spacing;
  std::vector<std::uint8_t> labels;

  LabelVolume() = default;
  LabelVolume(Dims3 dims_, Spacing spacing_, std::uint8_t fill = 0)
      : dims(dims_), spacing(spacing_),
        labels(static_cast<std::size_t>(dims_.voxels()), fill) {}

  std::uint8_t& at(std::int64_t z, std::int64_t y, std::int64_t x) {
    return labels[static_cast<std::size_t>(linear_index(dims, z, y, x))];
  }
  std::uint8_t at(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return labels[static_cast<std::size_t>(linear_index(dims, z, y, x))];
  }

  void validate() const;  // dims/data agreement and label alphabet
};

// Co-registered image channels sharing one grid.
struct MultiChannelVolume {
  std::vector<Volume3D> channels;

  std::int64_t channel_count() const {
    return static_cast<std::int64_t>(channels.size());
  }
  const Dims3& dims() const { return channels.front().dims; }
  const Spacing& spacing() const { return channels.front().spacing; }

  void validate() const;  // non-empty, all channels share dims and spacing
};

// Boolean voxel mask (1 byte per voxel, values 0/1).
struct Mask3D {
  Dims3 dims;
  Spacing spacing;
  std::vector<std::uint8_t> on;

  Mask3D() = default;
  Mask3D(Dims3 dims_, Spacing spacing_ = {})
      : dims(dims_), spacing(spacing_),
        on(static_cast<std::size_t>(dims_.voxels()), 0) {}

  std::uint8_t& at(std::int64_t z, std::int64_t y, std::int64_t x) {
    return on[static_cast<std::size_t>(linear_index(dims, z, y, x))];
  }
  std::uint8_t at(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return on[static_cast<std::size_t>(linear_index(dims, z, y, x))];
  }

  std::int64_t count() const;
};

// Tumor sub-regions defined over the label alphabet:
//   WholeTumor     = {1, 2, 4}
//   TumorCore      = {1, 4}
//   EnhancingTumor = {4}
// so EnhancingTumor is nested in TumorCore, which is nested in WholeTumor.
enum class RegionId { WholeTumor, TumorCore, EnhancingTumor };

inline constexpr std::array<RegionId, 3> kAllRegions = {
    RegionId::WholeTumor, RegionId::TumorCore, RegionId::EnhancingTumor};

const char* region_name(RegionId region);        // "WT" / "TC" / "ET"
bool region_contains(RegionId region, std::uint8_t label);
Mask3D region_mask(const LabelVolume& labels, RegionId region);

}  // namespace refrm3d
