#pragma once

// Synthetic volumes shared by the preprocessing, pipeline and acceptance
// tests: ellipsoidal "brain" regions on noisy background, with optional
// nested tumor label shells.

#include <array>
#include <cmath>

#include "refrm3d/rng.hpp"
#include "refrm3d/volume.hpp"

namespace testsupport {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline constexpr Mat3 kIdentity3 = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

// Rotation by Euler angles (radians) about the z, y and x voxel axes.
inline Mat3 rotation_zyx(double az, double ay, double ax) {
  const double cz = std::cos(az), sz = std::sin(az);
  const double cy = std::cos(ay), sy = std::sin(ay);
  const double cx = std::cos(ax), sx = std::sin(ax);
  const Mat3 rz = {{{1, 0, 0}, {0, cz, -sz}, {0, sz, cz}}};
  const Mat3 ry = {{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
  const Mat3 rx = {{{cx, -sx, 0}, {sx, cx, 0}, {0, 0, 1}}};
  auto mul = [](const Mat3& a, const Mat3& b) {
    Mat3 out{};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += a[i][k] * b[k][j];
        out[i][j] = s;
      }
    }
    return out;
  };
  return mul(rz, mul(ry, rx));
}

struct Ellipsoid {
  std::array<double, 3> center = {0, 0, 0};   // (z, y, x)
  std::array<double, 3> semi = {1, 1, 1};     // semi-axes in the body frame
  Mat3 rot = kIdentity3;                      // body-to-grid rotation
};

inline bool inside_ellipsoid(const Ellipsoid& e, double z, double y,
                             double x) {
  const double d[3] = {z - e.center[0], y - e.center[1], x - e.center[2]};
  double q = 0;
  for (int a = 0; a < 3; ++a) {
    // Project onto body axis a (columns of rot are the body axes).
    double p = 0;
    for (int b = 0; b < 3; ++b) p += e.rot[b][a] * d[b];
    q += (p / e.semi[a]) * (p / e.semi[a]);
  }
  return q <= 1.0;
}

inline refrm3d::Mask3D ellipsoid_voxels(const refrm3d::Dims3& dims,
                                        const Ellipsoid& e) {
  refrm3d::Mask3D mask(dims);
  for (std::int64_t z = 0; z < dims.d; ++z) {
    for (std::int64_t y = 0; y < dims.h; ++y) {
      for (std::int64_t x = 0; x < dims.w; ++x) {
        if (inside_ellipsoid(e, double(z), double(y), double(x))) {
          mask.at(z, y, x) = 1;
        }
      }
    }
  }
  return mask;
}

inline refrm3d::Mask3D ball_voxels(const refrm3d::Dims3& dims,
                                   std::array<double, 3> center,
                                   double radius) {
  return ellipsoid_voxels(dims, Ellipsoid{center, {radius, radius, radius}});
}

// Bright ellipsoidal brain (values around 100) over a dim noisy background.
// Keeping the brain under ~0.9% of the voxel count makes the 99th-percentile
// threshold capture the whole ellipsoid (plus isolated background speckles
// that the largest-component step discards).
inline refrm3d::Volume3D brain_channel(const refrm3d::Dims3& dims,
                                       const Ellipsoid& brain,
                                       refrm3d::Rng& rng,
                                       double brain_level = 100.0,
                                       double brain_noise = 5.0) {
  refrm3d::Volume3D vol(dims, {});
  for (std::int64_t z = 0; z < dims.d; ++z) {
    for (std::int64_t y = 0; y < dims.h; ++y) {
      for (std::int64_t x = 0; x < dims.w; ++x) {
        const bool in = inside_ellipsoid(brain, double(z), double(y), double(x));
        vol.at(z, y, x) = static_cast<float>(
            in ? rng.normal(brain_level, brain_noise) : rng.uniform(0.0, 3.0));
      }
    }
  }
  return vol;
}

// Nested tumor shells centred inside the brain: enhancing core (label 4),
// necrotic shell (label 1), edema shell (label 2).
inline refrm3d::LabelVolume nested_tumor_labels(
    const refrm3d::Dims3& dims, std::array<double, 3> center, double radius) {
  refrm3d::LabelVolume labels(dims, {});
  for (std::int64_t z = 0; z < dims.d; ++z) {
    for (std::int64_t y = 0; y < dims.h; ++y) {
      for (std::int64_t x = 0; x < dims.w; ++x) {
        const double dz = double(z) - center[0];
        const double dy = double(y) - center[1];
        const double dx = double(x) - center[2];
        const double r = std::sqrt(dz * dz + dy * dy + dx * dx);
        if (r <= radius / 3.0) {
          labels.at(z, y, x) = 4;
        } else if (r <= 2.0 * radius / 3.0) {
          labels.at(z, y, x) = 1;
        } else if (r <= radius) {
          labels.at(z, y, x) = 2;
        }
      }
    }
  }
  return labels;
}

struct PhantomCase {
  refrm3d::MultiChannelVolume image;
  refrm3d::LabelVolume labels;
  Ellipsoid brain;
  std::array<double, 3> tumor_center;
  double tumor_radius = 0;
};

// Multi-channel case: channel 0 carries the brain-mask signal; the others
// add tumor-correlated contrast so they are not copies of each other.
inline PhantomCase make_phantom_case(const refrm3d::Dims3& dims,
                                     const Ellipsoid& brain,
                                     double tumor_radius, refrm3d::Rng& rng,
                                     int channels = 3) {
  PhantomCase phantom;
  phantom.brain = brain;
  phantom.tumor_center = brain.center;
  phantom.tumor_radius = tumor_radius;
  phantom.labels = nested_tumor_labels(dims, brain.center, tumor_radius);
  for (int c = 0; c < channels; ++c) {
    refrm3d::Volume3D ch =
        brain_channel(dims, brain, rng, 100.0 - 10.0 * c, 4.0);
    // Tumor contrast distinct per channel.
    for (std::int64_t i = 0; i < dims.voxels(); ++i) {
      const auto label = phantom.labels.labels[static_cast<std::size_t>(i)];
      if (label != 0) {
        ch.data[static_cast<std::size_t>(i)] +=
            static_cast<float>(10.0 + 5.0 * c + 4.0 * label);
      }
    }
    phantom.image.channels.push_back(std::move(ch));
  }
  return phantom;
}

}  // namespace testsupport
