#include "refrm3d/preprocess.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "refrm3d/components.hpp"

namespace refrm3d {

double intensity_percentile(const Volume3D& volume, double percentile) {
  if (percentile < 0.0 || percentile > 1.0) {
    fail(ErrorCode::ConfigError, "percentile must lie in [0, 1]");
  }
  if (volume.data.empty()) {
    fail(ErrorCode::ShapeError, "cannot take a percentile of an empty volume");
  }
  std::vector<double> sorted(volume.data.begin(), volume.data.end());
  std::sort(sorted.begin(), sorted.end());
  const double rank = percentile * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const double frac = rank - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

Mask3D threshold_mask(const Volume3D& volume, double percentile) {
  const double threshold = intensity_percentile(volume, percentile);
  Mask3D mask(volume.dims, volume.spacing);
  std::int64_t count = 0;
  for (std::size_t i = 0; i < volume.data.size(); ++i) {
    if (static_cast<double>(volume.data[i]) > threshold) {
      mask.on[i] = 1;
      ++count;
    }
  }
  if (count == 0) {
    fail(ErrorCode::EmptyMask,
         "no voxel exceeds the intensity threshold (constant volume?)");
  }
  return mask;
}

BrainMask extract_brain_mask(const Volume3D& volume, double percentile,
                             int connectivity) {
  const Mask3D raw = threshold_mask(volume, percentile);
  const ComponentMap map = label_components(raw, connectivity);
  std::int32_t best = 1;
  for (std::int32_t id = 2; id <= map.count; ++id) {
    if (map.sizes[static_cast<std::size_t>(id - 1)] >
        map.sizes[static_cast<std::size_t>(best - 1)]) {
      best = id;
    }
  }
  BrainMask brain;
  brain.mask = Mask3D(volume.dims, volume.spacing);
  for (std::size_t i = 0; i < brain.mask.on.size(); ++i) {
    brain.mask.on[i] = map.labels[i] == best ? 1 : 0;
  }
  brain.voxel_count = map.sizes[static_cast<std::size_t>(best - 1)];
  brain.component_count = map.count;
  return brain;
}

std::pair<PcaFrame, BoundingBox> pca_bounding_box(const Mask3D& mask,
                                                  double margin_scale) {
  const Dims3& dims = mask.dims;
  std::vector<Eigen::Vector3d> coords;
  std::array<std::int64_t, 3> vox_min = {dims.d, dims.h, dims.w};
  std::array<std::int64_t, 3> vox_max = {-1, -1, -1};
  for (std::int64_t z = 0; z < dims.d; ++z) {
    for (std::int64_t y = 0; y < dims.h; ++y) {
      for (std::int64_t x = 0; x < dims.w; ++x) {
        if (!mask.at(z, y, x)) continue;
        coords.emplace_back(static_cast<double>(z), static_cast<double>(y),
                            static_cast<double>(x));
        const std::int64_t idx[3] = {z, y, x};
        for (int a = 0; a < 3; ++a) {
          vox_min[a] = std::min(vox_min[a], idx[a]);
          vox_max[a] = std::max(vox_max[a], idx[a]);
        }
      }
    }
  }
  if (coords.empty()) {
    fail(ErrorCode::EmptyMask, "cannot fit a bounding box to an empty mask");
  }

  PcaFrame frame;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& c : coords) mean += c;
  mean /= static_cast<double>(coords.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& c : coords) {
    const Eigen::Vector3d d = c - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(coords.size());
  for (int a = 0; a < 3; ++a) frame.mean[static_cast<std::size_t>(a)] = mean[a];

  // Per-voxel-axis spread drives the margin regardless of frame quality.
  std::array<std::int64_t, 3> margin;
  for (int a = 0; a < 3; ++a) {
    frame.axis_sigma[static_cast<std::size_t>(a)] =
        std::sqrt(std::max(0.0, cov(a, a)));
    margin[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(
        std::ceil(margin_scale * frame.axis_sigma[static_cast<std::size_t>(a)]));
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  Eigen::Vector3d evals = solver.eigenvalues();    // ascending
  Eigen::Matrix3d evecs = solver.eigenvectors();   // columns

  const double scale = std::max(1.0, evals.cwiseAbs().maxCoeff());
  frame.degenerate = coords.size() < 3 || evals[1] <= 1e-9 * scale;
  for (int a = 0; a < 3; ++a) {
    // Reorder to descending eigenvalues.
    frame.eigenvalues[static_cast<std::size_t>(a)] = evals[2 - a];
    for (int b = 0; b < 3; ++b) {
      frame.axes[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
          evecs(b, 2 - a);
    }
  }

  BoundingBox box;
  if (frame.degenerate) {
    // Collinear or coplanar cloud: the principal frame is not meaningful,
    // fall back to the plain axis-aligned extents.
    frame.axes = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    for (int a = 0; a < 3; ++a) {
      box.lo[static_cast<std::size_t>(a)] = vox_min[static_cast<std::size_t>(a)];
      box.hi[static_cast<std::size_t>(a)] = vox_max[static_cast<std::size_t>(a)];
    }
  } else {
    // Extents of the projections onto each principal axis.
    Eigen::Vector3d proj_min = Eigen::Vector3d::Constant(
        std::numeric_limits<double>::infinity());
    Eigen::Vector3d proj_max = -proj_min;
    for (const auto& c : coords) {
      for (int a = 0; a < 3; ++a) {
        Eigen::Vector3d q(frame.axes[static_cast<std::size_t>(a)][0],
                          frame.axes[static_cast<std::size_t>(a)][1],
                          frame.axes[static_cast<std::size_t>(a)][2]);
        const double p = c.dot(q);
        proj_min[a] = std::min(proj_min[a], p);
        proj_max[a] = std::max(proj_max[a], p);
      }
    }
    // Axis-aligned hull of the eight oriented-box corners.
    Eigen::Vector3d hull_min = Eigen::Vector3d::Constant(
        std::numeric_limits<double>::infinity());
    Eigen::Vector3d hull_max = -hull_min;
    for (int corner = 0; corner < 8; ++corner) {
      Eigen::Vector3d point = Eigen::Vector3d::Zero();
      for (int a = 0; a < 3; ++a) {
        const double extent =
            (corner >> a) & 1 ? proj_max[a] : proj_min[a];
        Eigen::Vector3d q(frame.axes[static_cast<std::size_t>(a)][0],
                          frame.axes[static_cast<std::size_t>(a)][1],
                          frame.axes[static_cast<std::size_t>(a)][2]);
        point += extent * q;
      }
      hull_min = hull_min.cwiseMin(point);
      hull_max = hull_max.cwiseMax(point);
    }
    for (int a = 0; a < 3; ++a) {
      box.lo[static_cast<std::size_t>(a)] =
          static_cast<std::int64_t>(std::floor(hull_min[a]));
      box.hi[static_cast<std::size_t>(a)] =
          static_cast<std::int64_t>(std::ceil(hull_max[a]));
    }
  }

  const std::int64_t limits[3] = {dims.d, dims.h, dims.w};
  for (int a = 0; a < 3; ++a) {
    auto& lo = box.lo[static_cast<std::size_t>(a)];
    auto& hi = box.hi[static_cast<std::size_t>(a)];
    lo -= margin[static_cast<std::size_t>(a)];
    hi += margin[static_cast<std::size_t>(a)];
    // Containment guarantee: never tighter than the raw voxel extents.
    lo = std::min(lo, vox_min[static_cast<std::size_t>(a)]);
    hi = std::max(hi, vox_max[static_cast<std::size_t>(a)]);
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min(hi, limits[a] - 1);
  }
  return {frame, box};
}

namespace {

void check_box(const Dims3& dims, const BoundingBox& box) {
  const std::int64_t limits[3] = {dims.d, dims.h, dims.w};
  for (int a = 0; a < 3; ++a) {
    if (box.lo[static_cast<std::size_t>(a)] < 0 ||
        box.hi[static_cast<std::size_t>(a)] >= limits[a] ||
        box.lo[static_cast<std::size_t>(a)] >
            box.hi[static_cast<std::size_t>(a)]) {
      fail(ErrorCode::ShapeError, "crop box does not fit inside the volume");
    }
  }
}

}  // namespace

Volume3D crop(const Volume3D& volume, const BoundingBox& box) {
  check_box(volume.dims, box);
  Volume3D out(Dims3{box.extent(0), box.extent(1), box.extent(2)},
               volume.spacing);
  for (std::int64_t z = box.lo[0]; z <= box.hi[0]; ++z) {
    for (std::int64_t y = box.lo[1]; y <= box.hi[1]; ++y) {
      const std::int64_t row_src =
          linear_index(volume.dims, z, y, box.lo[2]);
      const std::int64_t row_dst =
          linear_index(out.dims, z - box.lo[0], y - box.lo[1], 0);
      std::copy_n(volume.data.begin() + row_src, out.dims.w,
                  out.data.begin() + row_dst);
    }
  }
  return out;
}

LabelVolume crop(const LabelVolume& labels, const BoundingBox& box) {
  LabelVolume out(Dims3{box.extent(0), box.extent(1), box.extent(2)},
                  labels.spacing);
  check_box(labels.dims, box);
  for (std::int64_t z = box.lo[0]; z <= box.hi[0]; ++z) {
    for (std::int64_t y = box.lo[1]; y <= box.hi[1]; ++y) {
      const std::int64_t row_src = linear_index(labels.dims, z, y, box.lo[2]);
      const std::int64_t row_dst =
          linear_index(out.dims, z - box.lo[0], y - box.lo[1], 0);
      std::copy_n(labels.labels.begin() + row_src, out.dims.w,
                  out.labels.begin() + row_dst);
    }
  }
  return out;
}

Mask3D crop(const Mask3D& mask, const BoundingBox& box) {
  check_box(mask.dims, box);
  Mask3D out(Dims3{box.extent(0), box.extent(1), box.extent(2)}, mask.spacing);
  for (std::int64_t z = box.lo[0]; z <= box.hi[0]; ++z) {
    for (std::int64_t y = box.lo[1]; y <= box.hi[1]; ++y) {
      const std::int64_t row_src = linear_index(mask.dims, z, y, box.lo[2]);
      const std::int64_t row_dst =
          linear_index(out.dims, z - box.lo[0], y - box.lo[1], 0);
      std::copy_n(mask.on.begin() + row_src, out.dims.w,
                  out.on.begin() + row_dst);
    }
  }
  return out;
}

MultiChannelVolume crop(const MultiChannelVolume& volume,
                        const BoundingBox& box) {
  MultiChannelVolume out;
  for (const Volume3D& ch : volume.channels) {
    out.channels.push_back(crop(ch, box));
  }
  return out;
}

std::pair<Volume3D, NormalizationStats> zscore_normalize(
    const Volume3D& volume, const Mask3D& mask) {
  if (!(volume.dims == mask.dims)) {
    fail(ErrorCode::ShapeError, "volume and mask dims differ");
  }
  NormalizationStats stats;
  double sum = 0.0;
  for (std::size_t i = 0; i < volume.data.size(); ++i) {
    if (mask.on[i]) {
      sum += volume.data[i];
      ++stats.voxels;
    }
  }
  if (stats.voxels == 0) {
    fail(ErrorCode::EmptyMask, "z-score mask is empty");
  }
  stats.mean = sum / static_cast<double>(stats.voxels);
  double sq = 0.0;
  for (std::size_t i = 0; i < volume.data.size(); ++i) {
    if (mask.on[i]) {
      const double d = volume.data[i] - stats.mean;
      sq += d * d;
    }
  }
  stats.stddev = std::sqrt(sq / static_cast<double>(stats.voxels));

  Volume3D out(volume.dims, volume.spacing);
  if (stats.stddev < 1e-8) {
    stats.zero_variance = true;  // out stays all-zero
    return {out, stats};
  }
  for (std::size_t i = 0; i < volume.data.size(); ++i) {
    out.data[i] = static_cast<float>(
        (volume.data[i] - stats.mean) / stats.stddev);
  }
  return {out, stats};
}

SliceRange slice_range(const LabelVolume& labels) {
  const Dims3& dims = labels.dims;
  std::int64_t first = -1;
  std::int64_t last = -1;
  for (std::int64_t z = 0; z < dims.d; ++z) {
    const auto begin = labels.labels.begin() + z * dims.h * dims.w;
    const bool any = std::any_of(begin, begin + dims.h * dims.w,
                                 [](std::uint8_t v) { return v != 0; });
    if (any) {
      if (first < 0) first = z;
      last = z;
    }
  }
  if (first < 0) {
    fail(ErrorCode::NoTumor, "label volume has no tumor voxels");
  }
  return SliceRange{first, last};
}

LabelVolume crop_slices(const LabelVolume& labels, const SliceRange& range) {
  BoundingBox box{{range.first, 0, 0},
                  {range.last, labels.dims.h - 1, labels.dims.w - 1}};
  return crop(labels, box);
}

MultiChannelVolume crop_slices(const MultiChannelVolume& volume,
                               const SliceRange& range) {
  BoundingBox box{{range.first, 0, 0},
                  {range.last, volume.dims().h - 1, volume.dims().w - 1}};
  return crop(volume, box);
}

namespace {

struct AxisMap {
  std::vector<std::int64_t> i0;
  std::vector<std::int64_t> i1;
  std::vector<double> frac;
};

// Half-voxel-centre source coordinate, clamped to the valid range.
double source_coord(std::int64_t out_idx, std::int64_t in_size,
                    std::int64_t out_size) {
  const double src = (static_cast<double>(out_idx) + 0.5) *
                         static_cast<double>(in_size) /
                         static_cast<double>(out_size) -
                     0.5;
  return std::clamp(src, 0.0, static_cast<double>(in_size - 1));
}

AxisMap build_axis_map(std::int64_t in_size, std::int64_t out_size) {
  AxisMap map;
  map.i0.resize(static_cast<std::size_t>(out_size));
  map.i1.resize(static_cast<std::size_t>(out_size));
  map.frac.resize(static_cast<std::size_t>(out_size));
  for (std::int64_t o = 0; o < out_size; ++o) {
    const double src = source_coord(o, in_size, out_size);
    const auto lo = static_cast<std::int64_t>(std::floor(src));
    map.i0[static_cast<std::size_t>(o)] = lo;
    map.i1[static_cast<std::size_t>(o)] = std::min(lo + 1, in_size - 1);
    map.frac[static_cast<std::size_t>(o)] = src - static_cast<double>(lo);
  }
  return map;
}

Spacing rescale_spacing(const Spacing& spacing, const Dims3& from,
                        const Dims3& to) {
  // Physical extent dim * spacing is preserved; dx follows the width axis.
  return Spacing{
      spacing.dx * static_cast<float>(static_cast<double>(from.w) /
                                      static_cast<double>(to.w)),
      spacing.dy * static_cast<float>(static_cast<double>(from.h) /
                                      static_cast<double>(to.h)),
      spacing.dz * static_cast<float>(static_cast<double>(from.d) /
                                      static_cast<double>(to.d))};
}

inline double lerp_exact(double a, double b, double t) {
  return a + t * (b - a);  // exact for a == b, which keeps constants constant
}

}  // namespace

Volume3D resize_trilinear(const Volume3D& volume, const Dims3& target) {
  if (target.d <= 0 || target.h <= 0 || target.w <= 0) {
    fail(ErrorCode::ShapeError, "resize target dims must be positive");
  }
  if (target == volume.dims) {
    Volume3D out = volume;
    return out;
  }
  const AxisMap zm = build_axis_map(volume.dims.d, target.d);
  const AxisMap ym = build_axis_map(volume.dims.h, target.h);
  const AxisMap xm = build_axis_map(volume.dims.w, target.w);

  Volume3D out(target, rescale_spacing(volume.spacing, volume.dims, target));
  for (std::int64_t z = 0; z < target.d; ++z) {
    const auto z0 = zm.i0[static_cast<std::size_t>(z)];
    const auto z1 = zm.i1[static_cast<std::size_t>(z)];
    const double tz = zm.frac[static_cast<std::size_t>(z)];
    for (std::int64_t y = 0; y < target.h; ++y) {
      const auto y0 = ym.i0[static_cast<std::size_t>(y)];
      const auto y1 = ym.i1[static_cast<std::size_t>(y)];
      const double ty = ym.frac[static_cast<std::size_t>(y)];
      for (std::int64_t x = 0; x < target.w; ++x) {
        const auto x0 = xm.i0[static_cast<std::size_t>(x)];
        const auto x1 = xm.i1[static_cast<std::size_t>(x)];
        const double tx = xm.frac[static_cast<std::size_t>(x)];
        const double c00 = lerp_exact(volume.at(z0, y0, x0),
                                      volume.at(z0, y0, x1), tx);
        const double c01 = lerp_exact(volume.at(z0, y1, x0),
                                      volume.at(z0, y1, x1), tx);
        const double c10 = lerp_exact(volume.at(z1, y0, x0),
                                      volume.at(z1, y0, x1), tx);
        const double c11 = lerp_exact(volume.at(z1, y1, x0),
                                      volume.at(z1, y1, x1), tx);
        const double c0 = lerp_exact(c00, c01, ty);
        const double c1 = lerp_exact(c10, c11, ty);
        out.at(z, y, x) = static_cast<float>(lerp_exact(c0, c1, tz));
      }
    }
  }
  return out;
}

MultiChannelVolume resize_trilinear(const MultiChannelVolume& volume,
                                    const Dims3& target) {
  MultiChannelVolume out;
  for (const Volume3D& ch : volume.channels) {
    out.channels.push_back(resize_trilinear(ch, target));
  }
  return out;
}

LabelVolume resize_nearest(const LabelVolume& labels, const Dims3& target) {
  if (target.d <= 0 || target.h <= 0 || target.w <= 0) {
    fail(ErrorCode::ShapeError, "resize target dims must be positive");
  }
  if (target == labels.dims) {
    return labels;
  }
  auto nearest_map = [](std::int64_t in_size, std::int64_t out_size) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(out_size));
    for (std::int64_t o = 0; o < out_size; ++o) {
      const double src = source_coord(o, in_size, out_size);
      idx[static_cast<std::size_t>(o)] = std::clamp<std::int64_t>(
          static_cast<std::int64_t>(std::llround(src)), 0, in_size - 1);
    }
    return idx;
  };
  const auto zi = nearest_map(labels.dims.d, target.d);
  const auto yi = nearest_map(labels.dims.h, target.h);
  const auto xi = nearest_map(labels.dims.w, target.w);

  LabelVolume out(target, rescale_spacing(labels.spacing, labels.dims, target));
  for (std::int64_t z = 0; z < target.d; ++z) {
    for (std::int64_t y = 0; y < target.h; ++y) {
      for (std::int64_t x = 0; x < target.w; ++x) {
        out.at(z, y, x) = labels.at(zi[static_cast<std::size_t>(z)],
                                    yi[static_cast<std::size_t>(y)],
                                    xi[static_cast<std::size_t>(x)]);
      }
    }
  }
  return out;
}

PreprocessedCase preprocess_case(const MultiChannelVolume& image,
                                 const LabelVolume& labels,
                                 const PreprocessConfig& config) {
  image.validate();
  labels.validate();
  if (!(image.dims() == labels.dims)) {
    fail(ErrorCode::ShapeError, "image and label dims differ");
  }
  if (config.mask_channel < 0 ||
      config.mask_channel >= image.channel_count()) {
    fail(ErrorCode::ConfigError, "mask_channel out of range");
  }

  PreprocessedCase result;
  result.report.input_dims = image.dims();

  const BrainMask brain = extract_brain_mask(
      image.channels[static_cast<std::size_t>(config.mask_channel)],
      config.percentile, config.connectivity);
  result.report.mask_voxels = brain.voxel_count;
  result.report.mask_components = brain.component_count;

  auto [frame, box] = pca_bounding_box(brain.mask, config.margin_scale);
  result.report.frame = frame;
  result.report.crop_box = box;

  MultiChannelVolume cropped = crop(image, box);
  LabelVolume cropped_labels = crop(labels, box);
  const Mask3D cropped_mask = crop(brain.mask, box);

  for (int a = 0; a < 3; ++a) {
    result.report.margin[static_cast<std::size_t>(a)] =
        static_cast<std::int64_t>(std::ceil(
            config.margin_scale * frame.axis_sigma[static_cast<std::size_t>(a)]));
  }

  for (auto& channel : cropped.channels) {
    auto [normalized, stats] = zscore_normalize(channel, cropped_mask);
    channel = std::move(normalized);
    result.report.channel_stats.push_back(stats);
  }

  const SliceRange slices = slice_range(cropped_labels);
  result.report.slices = slices;
  cropped = crop_slices(cropped, slices);
  cropped_labels = crop_slices(cropped_labels, slices);

  result.image = resize_trilinear(cropped, config.target_dims);
  result.labels = resize_nearest(cropped_labels, config.target_dims);
  result.report.output_dims = config.target_dims;
  return result;
}

}  // namespace refrm3d
