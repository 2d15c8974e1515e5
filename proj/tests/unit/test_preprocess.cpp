#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>

#include "refrm3d/components.hpp"
#include "refrm3d/errors.hpp"
#include "refrm3d/preprocess.hpp"
#include "refrm3d/rng.hpp"
#include "phantoms.hpp"

using namespace refrm3d;
using testsupport::Ellipsoid;

namespace {

// Selection-based percentile oracle (no full sort) for cross-checking.
double percentile_oracle(std::vector<double> values, double p) {
  const double rank = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const double frac = rank - static_cast<double>(lo);
  std::nth_element(values.begin(), values.begin() + static_cast<long>(lo),
                   values.end());
  const double vlo = values[lo];
  if (lo + 1 >= values.size()) return vlo;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(lo + 1),
                   values.end());
  return vlo + frac * (values[lo + 1] - vlo);
}

// Queue-based flood fill, written independently of the library's stack walk.
std::set<std::int64_t> oracle_component(const Mask3D& mask, std::int64_t seed,
                                        int connectivity) {
  std::set<std::int64_t> members;
  std::queue<std::array<std::int64_t, 3>> frontier;
  const Dims3& dims = mask.dims;
  const std::int64_t sz = seed / (dims.h * dims.w);
  const std::int64_t sy = (seed / dims.w) % dims.h;
  const std::int64_t sx = seed % dims.w;
  frontier.push({sz, sy, sx});
  members.insert(seed);
  while (!frontier.empty()) {
    const auto [z, y, x] = frontier.front();
    frontier.pop();
    for (std::int64_t dz = -1; dz <= 1; ++dz) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          const int touched = int(dz != 0) + int(dy != 0) + int(dx != 0);
          if (touched == 0) continue;
          if (connectivity == 6 && touched != 1) continue;
          const std::int64_t nz = z + dz, ny = y + dy, nx = x + dx;
          if (nz < 0 || nz >= dims.d || ny < 0 || ny >= dims.h || nx < 0 ||
              nx >= dims.w) {
            continue;
          }
          const std::int64_t ni = linear_index(dims, nz, ny, nx);
          if (mask.on[static_cast<std::size_t>(ni)] && !members.count(ni)) {
            members.insert(ni);
            frontier.push({nz, ny, nx});
          }
        }
      }
    }
  }
  return members;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("percentile matches a selection-based oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    Volume3D vol({4, 5, 5}, {});
    for (auto& v : vol.data) v = static_cast<float>(rng.normal(0.0, 10.0));
    for (double p : {0.0, 0.25, 0.5, 0.9, 0.99, 1.0}) {
      const std::vector<double> vals(vol.data.begin(), vol.data.end());
      CHECK(intensity_percentile(vol, p) ==
            doctest::Approx(percentile_oracle(vals, p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("threshold keeps only voxels strictly above the 99th percentile") {
  // 990 zeros and 10 bright voxels: the interpolated threshold lands between
  // them, so exactly the 10 bright voxels survive.
  Volume3D vol({10, 10, 10}, {});
  for (int i = 0; i < 10; ++i) vol.data[static_cast<std::size_t>(i * 97)] = 5.0f;
  const Mask3D mask = threshold_mask(vol, 0.99);
  CHECK(mask.count() == 10);

  // Constant volumes cannot produce a mask.
  Volume3D flat({4, 4, 4}, {});
  for (auto& v : flat.data) v = 2.5f;
  CHECK_THROWS_AS(threshold_mask(flat, 0.99), PipelineError);
}

TEST_CASE("connectivity 26 bridges corner contact, 6 does not") {
  Mask3D mask({2, 2, 2});
  mask.at(0, 0, 0) = 1;
  mask.at(1, 1, 1) = 1;
  CHECK(label_components(mask, 26).count == 1);
  CHECK(label_components(mask, 6).count == 2);
}

TEST_CASE("largest component wins and ties take the earliest seed") {
  Mask3D mask({1, 3, 10});
  // Component A: 3 voxels starting at x=0; component B: 3 voxels at x=5.
  for (int x = 0; x < 3; ++x) mask.at(0, 0, x) = 1;
  for (int x = 5; x < 8; ++x) mask.at(0, 2, x) = 1;
  const Mask3D largest = largest_component_mask(mask, 6);
  CHECK(largest.count() == 3);
  CHECK(largest.at(0, 0, 0) == 1);  // earliest C-order component won the tie
  CHECK(largest.at(0, 2, 5) == 0);
}

TEST_CASE("component labelling agrees with an independent flood fill") {
  Rng rng(47);
  for (int connectivity : {6, 26}) {
    for (int trial = 0; trial < 5; ++trial) {
      Mask3D mask({8, 8, 8});
      for (auto& v : mask.on) v = rng.uniform() < 0.25 ? 1 : 0;
      if (std::accumulate(mask.on.begin(), mask.on.end(), 0) == 0) continue;

      const ComponentMap map = label_components(mask, connectivity);
      // Every component's member set must match the oracle fill from its
      // first voxel, and sizes must agree.
      for (std::int32_t id = 1; id <= map.count; ++id) {
        std::int64_t seed = -1;
        std::int64_t count = 0;
        for (std::size_t i = 0; i < map.labels.size(); ++i) {
          if (map.labels[i] == id) {
            if (seed < 0) seed = static_cast<std::int64_t>(i);
            ++count;
          }
        }
        const auto oracle = oracle_component(mask, seed, connectivity);
        CHECK(count == static_cast<std::int64_t>(oracle.size()));
        CHECK(count == map.sizes[static_cast<std::size_t>(id - 1)]);
        for (std::int64_t member : oracle) {
          CHECK(map.labels[static_cast<std::size_t>(member)] == id);
        }
      }
    }
  }
}

TEST_CASE("principal axes of an axis-aligned ellipsoid align with the grid") {
  const Dims3 dims{64, 64, 64};
  Ellipsoid e;
  e.center = {32, 32, 32};
  e.semi = {24, 14, 7};  // distinct extents along (d, h, w)
  const Mask3D mask = testsupport::ellipsoid_voxels(dims, e);
  const auto [frame, box] = pca_bounding_box(mask, 0.25);

  CHECK_FALSE(frame.degenerate);
  // Leading axis should match the depth axis within 1 degree.
  const double cos_tol = std::cos(1.0 * std::numbers::pi / 180.0);
  CHECK(std::fabs(frame.axes[0][0]) >= cos_tol);
  CHECK(std::fabs(frame.axes[1][1]) >= cos_tol);
  CHECK(std::fabs(frame.axes[2][2]) >= cos_tol);
  // Eigenvalues strictly ordered for distinct semi-axes.
  CHECK(frame.eigenvalues[0] > frame.eigenvalues[1]);
  CHECK(frame.eigenvalues[1] > frame.eigenvalues[2]);

  // Containment of every mask voxel.
  for (std::int64_t z = 0; z < dims.d; ++z) {
    for (std::int64_t y = 0; y < dims.h; ++y) {
      for (std::int64_t x = 0; x < dims.w; ++x) {
        if (mask.at(z, y, x)) CHECK(box.contains(z, y, x));
      }
    }
  }
}

TEST_CASE("sphere phantom crops to a small fraction of the volume") {
  const Dims3 dims{128, 128, 128};
  const Mask3D mask = testsupport::ball_voxels(dims, {64, 64, 64}, 20.0);
  const auto [frame, box] = pca_bounding_box(mask, 0.25);
  CHECK(static_cast<double>(box.voxels()) <=
        0.15 * static_cast<double>(dims.voxels()));
}

TEST_CASE("rotating the voxel cloud permutes but preserves the spectrum") {
  const Dims3 dims{48, 48, 48};
  Ellipsoid e;
  e.center = {24, 24, 24};
  e.semi = {18, 10, 6};
  const Mask3D mask = testsupport::ellipsoid_voxels(dims, e);

  // 90-degree rotation in the (h, w) plane: new(z, y, x) = old(z, x, H-1-y).
  Mask3D rotated(dims);
  for (std::int64_t z = 0; z < dims.d; ++z) {
    for (std::int64_t y = 0; y < dims.h; ++y) {
      for (std::int64_t x = 0; x < dims.w; ++x) {
        rotated.at(z, y, x) = mask.at(z, x, dims.h - 1 - y);
      }
    }
  }

  const auto [f1, b1] = pca_bounding_box(mask, 0.25);
  const auto [f2, b2] = pca_bounding_box(rotated, 0.25);
  std::array<double, 3> s1 = f1.eigenvalues;
  std::array<double, 3> s2 = f2.eigenvalues;
  std::sort(s1.begin(), s1.end());
  std::sort(s2.begin(), s2.end());
  for (int a = 0; a < 3; ++a) {
    CHECK(s1[static_cast<std::size_t>(a)] ==
          doctest::Approx(s2[static_cast<std::size_t>(a)]).epsilon(1e-6));
  }
}

TEST_CASE("degenerate clouds fall back to axis-aligned extents") {
  Mask3D line({4, 4, 16});
  for (int x = 2; x < 14; ++x) line.at(1, 2, x) = 1;
  const auto [frame, box] = pca_bounding_box(line, 0.25);
  CHECK(frame.degenerate);
  CHECK(box.lo[0] == 1);
  CHECK(box.hi[0] == 1);
  CHECK(box.lo[1] == 2);
  CHECK(box.hi[1] == 2);
  CHECK(box.lo[2] <= 2);
  CHECK(box.hi[2] >= 13);

  Mask3D single({3, 3, 3});
  single.at(1, 1, 1) = 1;
  const auto [f2, b2] = pca_bounding_box(single, 0.25);
  CHECK(f2.degenerate);
  CHECK(b2 == BoundingBox{{1, 1, 1}, {1, 1, 1}});
}

TEST_CASE("crop uses inclusive index arithmetic") {
  Volume3D vol({4, 5, 6}, {});
  std::iota(vol.data.begin(), vol.data.end(), 0.0f);
  const BoundingBox box{{1, 2, 3}, {2, 4, 5}};
  const Volume3D out = crop(vol, box);
  CHECK(out.dims == Dims3{2, 3, 3});
  for (std::int64_t z = 0; z < 2; ++z) {
    for (std::int64_t y = 0; y < 3; ++y) {
      for (std::int64_t x = 0; x < 3; ++x) {
        CHECK(out.at(z, y, x) == vol.at(z + 1, y + 2, x + 3));
      }
    }
  }
  CHECK_THROWS_AS(crop(vol, BoundingBox{{0, 0, 0}, {4, 4, 5}}), PipelineError);
}

TEST_CASE("z-score statistics recompute to zero mean and unit deviation") {
  Rng rng(59);
  Volume3D vol({8, 8, 8}, {});
  Mask3D mask({8, 8, 8});
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    vol.data[i] = static_cast<float>(rng.normal(40.0, 7.0));
    mask.on[i] = rng.uniform() < 0.5 ? 1 : 0;
  }
  const auto [out, stats] = zscore_normalize(vol, mask);
  CHECK_FALSE(stats.zero_variance);

  double sum = 0.0, sq = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (mask.on[i]) {
      sum += out.data[i];
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (mask.on[i]) {
      sq += (out.data[i] - mean) * (out.data[i] - mean);
    }
  }
  const double stddev = std::sqrt(sq / static_cast<double>(n));
  CHECK(std::fabs(mean) < 1e-5);
  CHECK(std::fabs(stddev - 1.0) < 1e-4);

  // Voxels outside the mask are transformed with the same statistics.
  const std::size_t outside = [&] {
    for (std::size_t i = 0; i < mask.on.size(); ++i) {
      if (!mask.on[i]) return i;
    }
    return std::size_t{0};
  }();
  CHECK(out.data[outside] ==
        doctest::Approx((vol.data[outside] - stats.mean) / stats.stddev));
}

TEST_CASE("z-score flags zero variance and rejects empty masks") {
  Volume3D vol({2, 2, 2}, {});
  for (auto& v : vol.data) v = 3.0f;
  Mask3D mask({2, 2, 2});
  mask.on[0] = mask.on[3] = 1;
  const auto [out, stats] = zscore_normalize(vol, mask);
  CHECK(stats.zero_variance);
  CHECK(std::all_of(out.data.begin(), out.data.end(),
                    [](float v) { return v == 0.0f; }));

  Mask3D empty({2, 2, 2});
  CHECK_THROWS_AS(zscore_normalize(vol, empty), PipelineError);
}

TEST_CASE("slice range matches direct enumeration and flags empty labels") {
  Rng rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    LabelVolume labels({12, 6, 6}, {});
    bool any = false;
    for (auto& v : labels.labels) {
      v = rng.uniform() < 0.05 ? 2 : 0;
      any |= v != 0;
    }
    if (!any) {
      CHECK_THROWS_AS(slice_range(labels), PipelineError);
      continue;
    }
    // Oracle: direct scan.
    std::int64_t lo = -1, hi = -1;
    for (std::int64_t z = 0; z < 12; ++z) {
      for (std::int64_t y = 0; y < 6; ++y) {
        for (std::int64_t x = 0; x < 6; ++x) {
          if (labels.at(z, y, x) != 0) {
            if (lo < 0) lo = z;
            hi = z;
          }
        }
      }
    }
    const SliceRange range = slice_range(labels);
    CHECK(range.first == lo);
    CHECK(range.last == hi);
  }

  LabelVolume empty({4, 4, 4}, {});
  CHECK_THROWS_AS(slice_range(empty), PipelineError);
}

TEST_CASE("trilinear resize matches the hand-computed 1-D oracle") {
  Volume3D vol({1, 1, 2}, {});
  vol.data = {0.0f, 1.0f};
  const Volume3D out = resize_trilinear(vol, {1, 1, 4});
  REQUIRE(out.data.size() == 4);
  CHECK(out.data[0] == doctest::Approx(0.0));
  CHECK(out.data[1] == doctest::Approx(0.25));
  CHECK(out.data[2] == doctest::Approx(0.75));
  CHECK(out.data[3] == doctest::Approx(1.0));
}

TEST_CASE("resize keeps constants exact and identity untouched") {
  Volume3D vol({3, 3, 3}, {2.0f, 1.0f, 0.5f});
  for (auto& v : vol.data) v = 7.25f;
  const Volume3D up = resize_trilinear(vol, {5, 4, 7});
  CHECK(std::all_of(up.data.begin(), up.data.end(),
                    [](float v) { return v == 7.25f; }));

  Rng rng(83);
  Volume3D noise({4, 4, 4}, {});
  for (auto& v : noise.data) v = static_cast<float>(rng.normal());
  const Volume3D same = resize_trilinear(noise, {4, 4, 4});
  CHECK(same.data == noise.data);
}

TEST_CASE("resize rescales spacing to preserve physical extent") {
  Volume3D vol({96, 64, 48}, {1.0f, 2.0f, 0.5f});
  const Volume3D out = resize_trilinear(vol, {128, 128, 128});
  // Width axis: 48 voxels at dx=1.0 -> 128 voxels at dx=0.375.
  CHECK(out.spacing.dx == doctest::Approx(1.0 * 48.0 / 128.0));
  CHECK(out.spacing.dy == doctest::Approx(2.0 * 64.0 / 128.0));
  CHECK(out.spacing.dz == doctest::Approx(0.5 * 96.0 / 128.0));
  CHECK(static_cast<double>(out.spacing.dz) * 128.0 ==
        doctest::Approx(0.5 * 96.0));
}

TEST_CASE("nearest-neighbour resize preserves the label alphabet") {
  LabelVolume labels({1, 1, 2}, {});
  labels.labels = {0, 4};
  const LabelVolume out = resize_nearest(labels, {1, 1, 4});
  CHECK(out.labels == std::vector<std::uint8_t>{0, 0, 4, 4});

  Rng rng(89);
  LabelVolume random({5, 6, 7}, {});
  for (auto& v : random.labels) {
    v = kValidLabels[static_cast<std::size_t>(rng.uniform_index(4))];
  }
  const LabelVolume resized = resize_nearest(random, {9, 4, 11});
  for (std::uint8_t v : resized.labels) CHECK(is_valid_label(v));
}

TEST_CASE("downsampling by two averages each block exactly") {
  Volume3D vol({1, 1, 4}, {});
  vol.data = {1.0f, 3.0f, 5.0f, 9.0f};
  const Volume3D out = resize_trilinear(vol, {1, 1, 2});
  CHECK(out.data[0] == 2.0f);   // (1+3)/2
  CHECK(out.data[1] == 7.0f);   // (5+9)/2
}

TEST_CASE("preprocess_case runs the full chain on a phantom") {
  const Dims3 dims{64, 64, 64};
  Rng rng(97);
  Ellipsoid brain;
  brain.center = {32, 30, 34};
  brain.semi = {9, 8, 7};  // ~2400 voxels < 0.9% of 64^3
  auto phantom = testsupport::make_phantom_case(dims, brain, 5.0, rng);

  PreprocessConfig config;
  config.target_dims = {32, 32, 32};
  const PreprocessedCase processed =
      preprocess_case(phantom.image, phantom.labels, config);

  CHECK(processed.image.dims() == Dims3{32, 32, 32});
  CHECK(processed.labels.dims == Dims3{32, 32, 32});
  CHECK(processed.image.channel_count() == 3);
  processed.labels.validate();
  CHECK(processed.report.mask_voxels > 1500);
  CHECK(processed.report.crop_box.voxels() < dims.voxels() / 2);
  for (const auto& stats : processed.report.channel_stats) {
    CHECK_FALSE(stats.zero_variance);
    CHECK(stats.voxels == processed.report.mask_voxels);
  }
  // Tumor labels survive the chain.
  std::int64_t tumor_voxels = 0;
  for (std::uint8_t v : processed.labels.labels) tumor_voxels += v != 0;
  CHECK(tumor_voxels > 0);

  // Flat mask channel -> EmptyMask.
  MultiChannelVolume flat = phantom.image;
  for (auto& v : flat.channels[0].data) v = 1.0f;
  CHECK_THROWS_AS(preprocess_case(flat, phantom.labels, config),
                  PipelineError);

  // No tumor labels anywhere -> NoTumor.
  LabelVolume no_tumor(dims, {});
  try {
    preprocess_case(phantom.image, no_tumor, config);
    FAIL_CHECK("expected NoTumor");
  } catch (const PipelineError& e) {
    CHECK(e.code() == ErrorCode::NoTumor);
  }
}

}  // TEST_SUITE
