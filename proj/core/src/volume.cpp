#include "refrm3d/volume.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace refrm3d {

std::string dims_to_string(const Dims3& dims) {
  std::ostringstream out;
  out << dims.d << "x" << dims.h << "x" << dims.w;
  return out.str();
}

void Volume3D::validate() const {
  if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0) {
    fail(ErrorCode::ShapeError, "volume dims must be positive, got " +
                                    dims_to_string(dims));
  }
  if (static_cast<std::int64_t>(data.size()) != dims.voxels()) {
    fail(ErrorCode::ShapeError,
         "volume payload size " + std::to_string(data.size()) +
             " does not match dims " + dims_to_string(dims));
  }
  if (spacing.dx <= 0.0f || spacing.dy <= 0.0f || spacing.dz <= 0.0f) {
    fail(ErrorCode::ShapeError, "volume spacing must be positive");
  }
  for (float v : data) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::CorruptFile, "volume contains non-finite values");
    }
  }
}

void LabelVolume::validate() const {
  if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0) {
    fail(ErrorCode::ShapeError, "label volume dims must be positive, got " +
                                    dims_to_string(dims));
  }
  if (static_cast<std::int64_t>(labels.size()) != dims.voxels()) {
    fail(ErrorCode::ShapeError,
         "label payload size " + std::to_string(labels.size()) +
             " does not match dims " + dims_to_string(dims));
  }
  for (std::uint8_t v : labels) {
    if (!is_valid_label(v)) {
      fail(ErrorCode::InvalidLabels,
           "label value " + std::to_string(int(v)) + " outside {0,1,2,4}");
    }
  }
}

void MultiChannelVolume::validate() const {
  if (channels.empty()) {
    fail(ErrorCode::ShapeError, "multi-channel volume has no channels");
  }
  const Dims3& d0 = channels.front().dims;
  const Spacing& s0 = channels.front().spacing;
  for (const Volume3D& ch : channels) {
    ch.validate();
    if (!(ch.dims == d0) || !(ch.spacing == s0)) {
      fail(ErrorCode::ShapeError, "channels disagree on dims or spacing");
    }
  }
}

std::int64_t Mask3D::count() const {
  return std::accumulate(on.begin(), on.end(), std::int64_t{0},
                         [](std::int64_t acc, std::uint8_t v) {
                           return acc + (v != 0 ? 1 : 0);
                         });
}

const char* region_name(RegionId region) {
  switch (region) {
    case RegionId::WholeTumor: return "WT";
    case RegionId::TumorCore: return "TC";
    case RegionId::EnhancingTumor: return "ET";
  }
  return "??";
}

bool region_contains(RegionId region, std::uint8_t label) {
  switch (region) {
    case RegionId::WholeTumor: return label == 1 || label == 2 || label == 4;
    case RegionId::TumorCore: return label == 1 || label == 4;
    case RegionId::EnhancingTumor: return label == 4;
  }
  return false;
}

Mask3D region_mask(const LabelVolume& labels, RegionId region) {
  Mask3D mask(labels.dims, labels.spacing);
  const std::size_t n = labels.labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    mask.on[i] = region_contains(region, labels.labels[i]) ? 1 : 0;
  }
  return mask;
}

}  // namespace refrm3d
