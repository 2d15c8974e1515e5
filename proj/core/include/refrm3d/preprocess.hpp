#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "refrm3d/volume.hpp"

namespace refrm3d {

// Inclusive voxel-index box in (d, h, w) axis order.
struct BoundingBox {
  std::array<std::int64_t, 3> lo = {0, 0, 0};
  std::array<std::int64_t, 3> hi = {0, 0, 0};

  std::int64_t extent(int axis) const { return hi[axis] - lo[axis] + 1; }
  std::int64_t voxels() const { return extent(0) * extent(1) * extent(2); }
  bool contains(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return z >= lo[0] && z <= hi[0] && y >= lo[1] && y <= hi[1] &&
           x >= lo[2] && x <= hi[2];
  }
  bool operator==(const BoundingBox&) const = default;
};

// Principal axes of the mask voxel cloud. Rows of `axes` are unit
// eigenvectors of the coordinate covariance, eigenvalues descending.
// `degenerate` marks collinear/coplanar clouds where the frame fell back
// to the identity axes.
struct PcaFrame {
  std::array<double, 3> mean = {0, 0, 0};
  std::array<std::array<double, 3>, 3> axes = {
      {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  std::array<double, 3> eigenvalues = {0, 0, 0};
  std::array<double, 3> axis_sigma = {0, 0, 0};  // spread per (d, h, w) axis
  bool degenerate = false;
};

struct NormalizationStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::int64_t voxels = 0;
  bool zero_variance = false;
};

// Inclusive depth-slice interval touching tumor labels.
struct SliceRange {
  std::int64_t first = 0;
  std::int64_t last = 0;

  std::int64_t count() const { return last - first + 1; }
  bool operator==(const SliceRange&) const = default;
};

// Brain mask after thresholding and largest-component filtering.
struct BrainMask {
  Mask3D mask;
  std::int64_t voxel_count = 0;
  std::int32_t component_count = 0;  // components before filtering
};

struct PreprocessConfig {
  double percentile = 0.99;       // intensity threshold quantile
  int connectivity = 26;          // 6 or 26
  double margin_scale = 0.25;     // box margin = ceil(margin_scale * sigma)
  Dims3 target_dims{128, 128, 128};
  int mask_channel = 0;           // channel driving the brain mask (Flair)
};

// Per-case record of what the chain did; serialized into the sidecar.
struct PreprocessReport {
  Dims3 input_dims;
  Dims3 output_dims;
  BoundingBox crop_box;
  std::array<std::int64_t, 3> margin = {0, 0, 0};
  PcaFrame frame;
  std::int64_t mask_voxels = 0;
  std::int32_t mask_components = 0;
  SliceRange slices;
  std::vector<NormalizationStats> channel_stats;
};

struct PreprocessedCase {
  MultiChannelVolume image;
  LabelVolume labels;
  PreprocessReport report;
};

// Linear-interpolated quantile of all voxel intensities (computed in f64).
double intensity_percentile(const Volume3D& volume, double percentile);

// Voxels strictly above the percentile threshold. Throws EmptyMask when
// nothing clears the threshold (e.g. constant input).
Mask3D threshold_mask(const Volume3D& volume, double percentile = 0.99);

// Threshold + largest connected component.
BrainMask extract_brain_mask(const Volume3D& volume, double percentile = 0.99,
                             int connectivity = 26);

// PCA-oriented extents, re-axis-aligned as the hull of the oriented box,
// expanded by ceil(margin_scale * sigma_axis) per axis and clamped to the
// grid. The returned box always contains every mask voxel.
std::pair<PcaFrame, BoundingBox> pca_bounding_box(const Mask3D& mask,
                                                  double margin_scale = 0.25);

Volume3D crop(const Volume3D& volume, const BoundingBox& box);
LabelVolume crop(const LabelVolume& labels, const BoundingBox& box);
Mask3D crop(const Mask3D& mask, const BoundingBox& box);
MultiChannelVolume crop(const MultiChannelVolume& volume,
                        const BoundingBox& box);

// Z-score over masked voxels, transform applied to every voxel. A masked
// standard deviation below 1e-8 yields an all-zero volume with the
// zero_variance flag set instead of dividing by noise.
std::pair<Volume3D, NormalizationStats> zscore_normalize(
    const Volume3D& volume, const Mask3D& mask);

// First/last depth slice containing any nonzero label; NoTumor if none.
SliceRange slice_range(const LabelVolume& labels);

LabelVolume crop_slices(const LabelVolume& labels, const SliceRange& range);
MultiChannelVolume crop_slices(const MultiChannelVolume& volume,
                               const SliceRange& range);

// Resampling to a target grid. Spacing is rescaled per axis so the physical
// extent dim * spacing is preserved. Images interpolate trilinearly
// (half-voxel-centre convention, clamped); labels use nearest neighbour.
Volume3D resize_trilinear(const Volume3D& volume, const Dims3& target);
MultiChannelVolume resize_trilinear(const MultiChannelVolume& volume,
                                    const Dims3& target);
LabelVolume resize_nearest(const LabelVolume& labels, const Dims3& target);

// Full chain: brain mask on the mask channel -> PCA crop -> per-channel
// z-score -> tumor slice trim -> resample to config target.
PreprocessedCase preprocess_case(const MultiChannelVolume& image,
                                 const LabelVolume& labels,
                                 const PreprocessConfig& config);

}  // namespace refrm3d
