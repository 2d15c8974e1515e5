#pragma once

#include <cstdint>
#include <vector>

#include "refrm3d/volume.hpp"

namespace refrm3d {

// Connected-component labelling over a boolean mask. Component ids start at
// 1 and are assigned in C-order discovery order, so the component containing
// the lowest linear index gets the lowest id. Background voxels stay 0.
struct ComponentMap {
  std::vector<std::int32_t> labels;   // one entry per voxel
  std::vector<std::int64_t> sizes;    // sizes[id - 1] = voxel count of id
  std::int32_t count = 0;
};

// connectivity: 6 (face neighbours) or 26 (face, edge and corner neighbours).
ComponentMap label_components(const Mask3D& mask, int connectivity);

// Largest component as a mask; ties resolve to the lowest component id,
// i.e. the component whose first voxel comes earliest in C order.
Mask3D largest_component_mask(const Mask3D& mask, int connectivity);

}  // namespace refrm3d
