#include "refrm3d/components.hpp"

#include <array>

namespace refrm3d {

namespace {

std::vector<std::array<std::int64_t, 3>> neighbour_offsets(int connectivity) {
  if (connectivity != 6 && connectivity != 26) {
    fail(ErrorCode::ConfigError,
         "connectivity must be 6 or 26, got " + std::to_string(connectivity));
  }
  std::vector<std::array<std::int64_t, 3>> offsets;
  for (std::int64_t dz = -1; dz <= 1; ++dz) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        if (dz == 0 && dy == 0 && dx == 0) continue;
        const int manhattan = int(dz != 0) + int(dy != 0) + int(dx != 0);
        if (connectivity == 6 && manhattan != 1) continue;
        offsets.push_back({dz, dy, dx});
      }
    }
  }
  return offsets;
}

}  // namespace

ComponentMap label_components(const Mask3D& mask, int connectivity) {
  const auto offsets = neighbour_offsets(connectivity);
  const Dims3& dims = mask.dims;
  ComponentMap map;
  map.labels.assign(mask.on.size(), 0);

  std::vector<std::int64_t> stack;
  for (std::int64_t z = 0; z < dims.d; ++z) {
    for (std::int64_t y = 0; y < dims.h; ++y) {
      for (std::int64_t x = 0; x < dims.w; ++x) {
        const std::int64_t seed = linear_index(dims, z, y, x);
        if (!mask.on[static_cast<std::size_t>(seed)] ||
            map.labels[static_cast<std::size_t>(seed)] != 0) {
          continue;
        }
        const std::int32_t id = ++map.count;
        std::int64_t size = 0;
        stack.clear();
        stack.push_back(seed);
        map.labels[static_cast<std::size_t>(seed)] = id;
        while (!stack.empty()) {
          const std::int64_t cur = stack.back();
          stack.pop_back();
          ++size;
          const std::int64_t cz = cur / (dims.h * dims.w);
          const std::int64_t cy = (cur / dims.w) % dims.h;
          const std::int64_t cx = cur % dims.w;
          for (const auto& off : offsets) {
            const std::int64_t nz = cz + off[0];
            const std::int64_t ny = cy + off[1];
            const std::int64_t nx = cx + off[2];
            if (nz < 0 || nz >= dims.d || ny < 0 || ny >= dims.h || nx < 0 ||
                nx >= dims.w) {
              continue;
            }
            const std::int64_t ni = linear_index(dims, nz, ny, nx);
            if (mask.on[static_cast<std::size_t>(ni)] &&
                map.labels[static_cast<std::size_t>(ni)] == 0) {
              map.labels[static_cast<std::size_t>(ni)] = id;
              stack.push_back(ni);
            }
          }
        }
        map.sizes.push_back(size);
      }
    }
  }
  return map;
}

Mask3D largest_component_mask(const Mask3D& mask, int connectivity) {
  const ComponentMap map = label_components(mask, connectivity);
  if (map.count == 0) {
    fail(ErrorCode::EmptyMask, "mask has no foreground voxels");
  }
  std::int32_t best = 1;
  for (std::int32_t id = 2; id <= map.count; ++id) {
    if (map.sizes[static_cast<std::size_t>(id - 1)] >
        map.sizes[static_cast<std::size_t>(best - 1)]) {
      best = id;
    }
  }
  Mask3D out(mask.dims, mask.spacing);
  for (std::size_t i = 0; i < out.on.size(); ++i) {
    out.on[i] = map.labels[i] == best ? 1 : 0;
  }
  return out;
}

}  // namespace refrm3d
