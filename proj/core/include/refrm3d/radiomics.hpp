#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "refrm3d/volume.hpp"

namespace refrm3d {

// Isosurface of a binary region. Vertices are in physical millimeters
// (voxel index times spacing); faces index vertices with a consistent
// outward orientation, so solid inputs yield closed meshes with positive
// signed volume.
struct TriangleMesh {
  std::vector<std::array<double, 3>> vertices;  // (x, y, z) mm
  std::vector<std::array<std::int64_t, 3>> faces;
};

// Marching cubes at iso-level 0.5. The inside/outside pattern, and with it
// the mesh topology, comes from the binary mask; crossing positions
// interpolate the 3^3 box average of the indicator to iso 0.5 where that
// mollified field changes sides along the edge, and stay at the edge
// midpoint where it does not (features a voxel or two wide). Raw midpoint
// crossings everywhere would overshoot curved surface areas by a
// non-vanishing ~7%; flat boundaries keep exact midpoints either way. The
// grid is implicitly zero-padded by one voxel so the surface always
// closes. Ambiguous checkerboard faces are resolved by a fixed rule
// (diagonal inside corners stay separated), which keeps adjacent cells
// consistent and every mesh watertight. Empty mask -> EmptyRegion.
TriangleMesh extract_mesh(const Mask3D& mask);

// Every undirected edge is shared by exactly two faces, traversed in
// opposite directions.
bool mesh_is_closed(const TriangleMesh& mesh);

// Absolute value of the signed tetrahedron sum sum_f det(v0, v1, v2) / 6.
// Requires a closed mesh -> OpenMesh otherwise.
double mesh_volume(const TriangleMesh& mesh);

// Sum of triangle areas |(v1 - v0) x (v2 - v0)| / 2.
double surface_area(const TriangleMesh& mesh);

// pi^(1/3) * (6 V)^(2/3) / A; 1.0 for a perfect sphere. Non-positive
// inputs -> InvalidGeometry.
double sphericity(double volume, double area);

// Number of set voxels times the spacing cell volume; 0 for an empty mask.
double voxel_volume(const Mask3D& mask);

struct RadiomicsFeatures {
  double mesh_volume = 0.0;   // mm^3, largest fragment only
  double voxel_volume = 0.0;  // mm^3, all fragments
  double surface_area = 0.0;  // mm^2, largest fragment only
  double sphericity = 0.0;
  std::int64_t fragment_count = 0;  // 6-connected components of the region
};

// Shape features of one region of a label volume. Mesh-based features come
// from the largest 6-connected fragment so the closed-mesh invariant holds;
// voxel_volume still counts every fragment. Empty region -> EmptyRegion.
RadiomicsFeatures radiomics_for_case(const LabelVolume& labels,
                                     RegionId region);

struct RadiomicsRow {
  std::string case_id;
  RegionId region;
  RadiomicsFeatures features;
};

// case_id,region,mesh_volume,voxel_volume,surface_area,sphericity,fragment_count
void write_radiomics_csv(const std::filesystem::path& path,
                         const std::vector<RadiomicsRow>& rows);

}  // namespace refrm3d
