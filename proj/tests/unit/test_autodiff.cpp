#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "refrm3d/preprocess.hpp"
#include "refrm3d/tensor.hpp"

using namespace refrm3d;
using testsupport::check_gradients;
using testsupport::make_probe;
using testsupport::random_signed_tensor;
using testsupport::random_tensor;
using testsupport::separated_tensor;

namespace {

constexpr double kGradTol = 1e-4;
const std::vector<std::uint64_t> kSeeds = {11, 23, 35, 47, 59};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("conv3d output extents follow the strided dilated formula") {
  struct Case {
    std::int64_t n;
    int k, s, p, d;
  };
  const Case cases[] = {{5, 3, 1, 1, 1}, {5, 3, 1, 2, 2}, {5, 3, 2, 0, 1},
                        {4, 2, 2, 0, 1}, {9, 3, 3, 1, 1}, {7, 5, 1, 2, 1}};
  for (const auto& c : cases) {
    auto spec = ConvSpec::cubic(1, 1, c.k, c.s, c.p, c.d);
    const std::int64_t expected =
        (c.n + 2 * c.p - static_cast<std::int64_t>(c.d) * (c.k - 1) - 1) /
            c.s +
        1;
    auto out = spec.conv_output_dims({c.n, c.n, c.n});
    CHECK(out[0] == expected);
    CHECK(out[1] == expected);
    CHECK(out[2] == expected);
  }
}

TEST_CASE("conv3d matches hand-computed sums") {
  SUBCASE("full-window kernel reduces to a weighted sum plus bias") {
    auto x = Tensor::from_values({1, 2, 2, 2, 2},
                                 {1, 2, 3, 4, 5, 6, 7, 8,  // channel 0
                                  10, 20, 30, 40, 50, 60, 70, 80});
    auto w = Tensor::full({1, 2, 2, 2, 2}, 1.0);
    auto b = Tensor::from_values({1}, {-1.0});
    auto y = conv3d(x, w, b, ConvSpec::cubic(2, 1, 2));
    REQUIRE(y.shape() == std::vector<std::int64_t>{1, 1, 1, 1, 1});
    CHECK(y.values()[0] == doctest::Approx(36.0 + 360.0 - 1.0));
  }
  SUBCASE("padding contributes zeros at the border") {
    auto x = Tensor::full({1, 1, 2, 2, 2}, 1.0);
    auto w = Tensor::full({1, 1, 2, 2, 2}, 1.0);
    auto y = conv3d(x, w, Tensor(), ConvSpec::cubic(1, 1, 2, 1, 1));
    REQUIRE(y.shape() == std::vector<std::int64_t>{1, 1, 3, 3, 3});
    CHECK(y.values()[0] == doctest::Approx(1.0));    // corner overlap
    CHECK(y.values()[13] == doctest::Approx(8.0));   // full overlap centre
  }
  SUBCASE("dilation skips every other sample") {
    auto x = Tensor::from_values({1, 1, 1, 1, 5}, {1, 2, 3, 4, 5});
    auto w = Tensor::full({1, 1, 1, 1, 3}, 1.0);
    ConvSpec spec{1, 1, {1, 1, 3}, 1, 0, 2};
    // depth/height extents are 1, so the padded-free formula still holds
    // there with k = 1.
    auto y = conv3d(x, w, Tensor(), spec);
    REQUIRE(y.shape() == std::vector<std::int64_t>{1, 1, 1, 1, 1});
    CHECK(y.values()[0] == doctest::Approx(1.0 + 3.0 + 5.0));
  }
  SUBCASE("stride walks the input in steps") {
    auto x = Tensor::from_values({1, 1, 1, 1, 4}, {1, 2, 3, 4});
    auto w = Tensor::full({1, 1, 1, 1, 2}, 1.0);
    // depth/height kernels of 1 leave those single-sample axes untouched
    ConvSpec spec{1, 1, {1, 1, 2}, /*stride=*/2, /*padding=*/0,
                  /*dilation=*/1};
    auto y = conv3d(x, w, Tensor(), spec);
    REQUIRE(y.shape() == std::vector<std::int64_t>{1, 1, 1, 1, 2});
    CHECK(y.values()[0] == doctest::Approx(3.0));
    CHECK(y.values()[1] == doctest::Approx(7.0));
  }
}

TEST_CASE("conv3d forward is bitwise deterministic") {
  Rng rng(99);
  auto x = random_tensor(rng, {1, 2, 5, 5, 5}, -1.0, 1.0, false);
  auto w = random_tensor(rng, {3, 2, 3, 3, 3}, -1.0, 1.0, false);
  auto b = random_tensor(rng, {3}, -0.5, 0.5, false);
  auto spec = ConvSpec::cubic(2, 3, 3, 1, 1);
  auto y1 = conv3d(x, w, b, spec);
  auto y2 = conv3d(x, w, b, spec);
  REQUIRE(y1.values().size() == y2.values().size());
  CHECK(std::memcmp(y1.values().data(), y2.values().data(),
                    y1.values().size() * sizeof(double)) == 0);
}

TEST_CASE("conv3d gradients match central finite differences") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    CAPTURE(seed);
    {
      auto x = random_tensor(rng, {1, 2, 4, 4, 4}, -1.0, 1.0, true);
      auto w = random_tensor(rng, {3, 2, 3, 3, 3}, -1.0, 1.0, true);
      auto b = random_tensor(rng, {3}, -0.5, 0.5, true);
      auto spec = ConvSpec::cubic(2, 3, 3, 1, 1);
      Tensor probe;
      {
        NoGradGuard no_grad;
        probe = make_probe(rng, conv3d(x, w, b, spec).shape());
      }
      auto fn = [&] { return sum_all(mul(conv3d(x, w, b, spec), probe)); };
      auto res = check_gradients(fn, {x, w, b});
      CHECK(res.max_rel_err < kGradTol);
    }
    {
      // dilated variant
      auto x = random_tensor(rng, {1, 1, 6, 6, 6}, -1.0, 1.0, true);
      auto w = random_tensor(rng, {2, 1, 3, 3, 3}, -1.0, 1.0, true);
      auto b = random_tensor(rng, {2}, -0.5, 0.5, true);
      auto spec = ConvSpec::cubic(1, 2, 3, 1, 2, 2);
      Tensor probe;
      {
        NoGradGuard no_grad;
        probe = make_probe(rng, conv3d(x, w, b, spec).shape());
      }
      auto fn = [&] { return sum_all(mul(conv3d(x, w, b, spec), probe)); };
      auto res = check_gradients(fn, {x, w, b});
      CHECK(res.max_rel_err < kGradTol);
    }
    {
      // strided, bias-free variant
      auto x = random_tensor(rng, {1, 2, 4, 4, 4}, -1.0, 1.0, true);
      auto w = random_tensor(rng, {2, 2, 2, 2, 2}, -1.0, 1.0, true);
      auto spec = ConvSpec::cubic(2, 2, 2, 2, 0);
      Tensor probe;
      {
        NoGradGuard no_grad;
        probe = make_probe(rng, conv3d(x, w, Tensor(), spec).shape());
      }
      auto fn = [&] {
        return sum_all(mul(conv3d(x, w, Tensor(), spec), probe));
      };
      auto res = check_gradients(fn, {x, w});
      CHECK(res.max_rel_err < kGradTol);
    }
  }
}

TEST_CASE("transposed_conv3d output extents invert the strided conv") {
  auto spec = ConvSpec::cubic(2, 3, 2, 2, 0);
  auto out = spec.transposed_output_dims({4, 4, 4});
  CHECK(out == std::array<std::int64_t, 3>{8, 8, 8});
  auto spec2 = ConvSpec::cubic(2, 3, 3, 1, 1);
  CHECK(spec2.transposed_output_dims({5, 5, 5}) ==
        std::array<std::int64_t, 3>{5, 5, 5});
}

TEST_CASE("transposed_conv3d is the adjoint of conv3d under one weight") {
  for (auto seed : {3ULL, 17ULL}) {
    Rng rng(seed);
    CAPTURE(seed);
    // <conv(x; W), y> == <x, tconv(y; W)> when both ops share the raw
    // weight buffer: the first weight axis is conv's out-channels and
    // tconv's in-channels.
    {
      auto conv_spec = ConvSpec::cubic(2, 3, 3, 1, 1);
      auto tconv_spec = ConvSpec::cubic(3, 2, 3, 1, 1);
      auto x = random_tensor(rng, {1, 2, 5, 5, 5}, -1.0, 1.0, false);
      auto w = random_tensor(rng, {3, 2, 3, 3, 3}, -1.0, 1.0, false);
      auto cx = conv3d(x, w, Tensor(), conv_spec);
      auto y = random_tensor(rng, cx.shape(), -1.0, 1.0, false);
      auto ty = transposed_conv3d(y, w, Tensor(), tconv_spec);
      REQUIRE(ty.shape() == x.shape());
      const double lhs = dot(cx.values(), y.values());
      const double rhs = dot(x.values(), ty.values());
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
    {
      auto conv_spec = ConvSpec::cubic(2, 3, 2, 2, 0);
      auto tconv_spec = ConvSpec::cubic(3, 2, 2, 2, 0);
      auto x = random_tensor(rng, {1, 2, 6, 6, 6}, -1.0, 1.0, false);
      auto w = random_tensor(rng, {3, 2, 2, 2, 2}, -1.0, 1.0, false);
      auto cx = conv3d(x, w, Tensor(), conv_spec);
      auto y = random_tensor(rng, cx.shape(), -1.0, 1.0, false);
      auto ty = transposed_conv3d(y, w, Tensor(), tconv_spec);
      REQUIRE(ty.shape() == x.shape());
      CHECK(dot(cx.values(), y.values()) ==
            doctest::Approx(dot(x.values(), ty.values())).epsilon(1e-10));
    }
  }
}

TEST_CASE("transposed_conv3d forward equals conv3d's input gradient") {
  Rng rng(21);
  auto conv_spec = ConvSpec::cubic(2, 3, 3, 1, 1);
  auto x = random_tensor(rng, {1, 2, 4, 4, 4}, -1.0, 1.0, true);
  auto w = random_tensor(rng, {3, 2, 3, 3, 3}, -1.0, 1.0, false);
  Tensor y;
  {
    NoGradGuard no_grad;
    y = make_probe(rng, conv3d(x, w, Tensor(), conv_spec).shape());
  }
  backward(sum_all(mul(conv3d(x, w, Tensor(), conv_spec), y)));

  auto tconv_spec = ConvSpec::cubic(3, 2, 3, 1, 1);
  auto ty = transposed_conv3d(y, w, Tensor(), tconv_spec);
  REQUIRE(x.grad().size() == ty.values().size());
  for (std::size_t i = 0; i < ty.values().size(); ++i) {
    CHECK(x.grad()[i] == doctest::Approx(ty.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("transposed_conv3d gradients match central finite differences") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    CAPTURE(seed);
    {
      auto x = random_tensor(rng, {1, 2, 3, 3, 3}, -1.0, 1.0, true);
      auto w = random_tensor(rng, {2, 3, 2, 2, 2}, -1.0, 1.0, true);
      auto b = random_tensor(rng, {3}, -0.5, 0.5, true);
      auto spec = ConvSpec::cubic(2, 3, 2, 2, 0);
      Tensor probe;
      {
        NoGradGuard no_grad;
        probe = make_probe(rng, transposed_conv3d(x, w, b, spec).shape());
      }
      auto fn = [&] {
        return sum_all(mul(transposed_conv3d(x, w, b, spec), probe));
      };
      auto res = check_gradients(fn, {x, w, b});
      CHECK(res.max_rel_err < kGradTol);
    }
    {
      auto x = random_tensor(rng, {1, 2, 3, 3, 3}, -1.0, 1.0, true);
      auto w = random_tensor(rng, {2, 2, 3, 3, 3}, -1.0, 1.0, true);
      auto b = random_tensor(rng, {2}, -0.5, 0.5, true);
      auto spec = ConvSpec::cubic(2, 2, 3, 1, 1);
      Tensor probe;
      {
        NoGradGuard no_grad;
        probe = make_probe(rng, transposed_conv3d(x, w, b, spec).shape());
      }
      auto fn = [&] {
        return sum_all(mul(transposed_conv3d(x, w, b, spec), probe));
      };
      auto res = check_gradients(fn, {x, w, b});
      CHECK(res.max_rel_err < kGradTol);
    }
  }
}

TEST_CASE("maxpool3d keeps window maxima and ties go to the first index") {
  SUBCASE("maxima") {
    auto x = Tensor::from_values({1, 1, 2, 2, 4},
                                 {1, 9, 2, 8, 3, 7, 4, 6,
                                  5, 5, 6, 4, 7, 3, 8, 2});
    auto y = maxpool3d(x, 2, 2);
    REQUIRE(y.shape() == std::vector<std::int64_t>{1, 1, 1, 1, 2});
    CHECK(y.values()[0] == doctest::Approx(9.0));
    CHECK(y.values()[1] == doctest::Approx(8.0));
  }
  SUBCASE("tied window routes gradient to the lowest linear index") {
    auto x = Tensor::full({1, 1, 2, 2, 2}, 5.0, /*requires_grad=*/true);
    backward(sum_all(maxpool3d(x, 2, 2)));
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    for (std::size_t i = 1; i < 8; ++i) CHECK(x.grad()[i] == 0.0);
  }
}

TEST_CASE("maxpool3d gradients match central finite differences") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    CAPTURE(seed);
    auto x = separated_tensor(rng, {1, 2, 4, 4, 4}, true);
    Tensor probe;
    {
      NoGradGuard no_grad;
      probe = make_probe(rng, maxpool3d(x, 2, 2).shape());
    }
    auto fn = [&] { return sum_all(mul(maxpool3d(x, 2, 2), probe)); };
    auto res = check_gradients(fn, {x});
    CHECK(res.max_rel_err < kGradTol);
  }
}

TEST_CASE("upsample_trilinear3d agrees with the resampler on integer data") {
  Rng rng(5);
  Volume3D vol(Dims3{3, 4, 5}, Spacing{1.0f, 1.0f, 1.0f});
  std::vector<double> tv(vol.data.size());
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    const double v = static_cast<double>(rng.uniform_index(17)) - 8.0;
    vol.data[i] = static_cast<float>(v);
    tv[i] = v;
  }
  auto t = Tensor::from_values({1, 1, 3, 4, 5}, std::move(tv));
  auto up = upsample_trilinear3d(t, 2);
  auto resized = resize_trilinear(vol, Dims3{6, 8, 10});
  REQUIRE(up.values().size() == resized.data.size());
  // Integer samples and quarter-integer weights are exact in both the f32
  // and f64 paths, so the two implementations must agree bit for bit.
  for (std::size_t i = 0; i < resized.data.size(); ++i) {
    CHECK(up.values()[i] == static_cast<double>(resized.data[i]));
  }
}

TEST_CASE("upsample_trilinear3d backward conserves gradient mass") {
  Rng rng(9);
  auto x = random_tensor(rng, {1, 2, 3, 3, 3}, -1.0, 1.0, true);
  backward(sum_all(upsample_trilinear3d(x, 2)));
  double total = 0.0;
  for (double g : x.grad()) total += g;
  CHECK(total == doctest::Approx(2.0 * 6 * 6 * 6).epsilon(1e-12));
}

TEST_CASE("upsample_trilinear3d gradients match central finite differences") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    CAPTURE(seed);
    auto x = random_tensor(rng, {1, 2, 3, 3, 3}, -1.0, 1.0, true);
    Tensor probe;
    {
      NoGradGuard no_grad;
      probe = make_probe(rng, upsample_trilinear3d(x, 2).shape());
    }
    auto fn = [&] { return sum_all(mul(upsample_trilinear3d(x, 2), probe)); };
    auto res = check_gradients(fn, {x});
    CHECK(res.max_rel_err < kGradTol);
  }
}

TEST_CASE("relu gradients match central finite differences") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    CAPTURE(seed);
    // keep inputs away from the kink at zero
    auto x = random_signed_tensor(rng, {2, 3, 2, 2, 2}, 0.1, true);
    Tensor probe;
    {
      NoGradGuard no_grad;
      probe = make_probe(rng, x.shape());
    }
    auto fn = [&] { return sum_all(mul(relu(x), probe)); };
    auto res = check_gradients(fn, {x});
    CHECK(res.max_rel_err < kGradTol);
  }
}

TEST_CASE("softmax_channel fibers sum to one and ignore shifts") {
  Rng rng(31);
  auto x = random_tensor(rng, {1, 4, 2, 2, 2}, -2.0, 2.0, false);
  auto y = softmax_channel(x);
  const std::int64_t plane = 8;
  for (std::int64_t i = 0; i < plane; ++i) {
    double total = 0.0;
    for (std::int64_t c = 0; c < 4; ++c) {
      const double v = y.values()[static_cast<std::size_t>(c * plane + i)];
      CHECK(v > 0.0);
      total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }

  auto xs = Tensor::from_values(x.shape(), x.values());
  for (std::int64_t c = 0; c < 4; ++c) {
    xs.mutable_values()[static_cast<std::size_t>(c * plane + 3)] += 0.37;
  }
  auto ys = softmax_channel(xs);
  for (std::int64_t c = 0; c < 4; ++c) {
    CHECK(ys.values()[static_cast<std::size_t>(c * plane + 3)] ==
          doctest::Approx(
              y.values()[static_cast<std::size_t>(c * plane + 3)])
              .epsilon(1e-12));
  }
}

TEST_CASE("softmax_channel gradients match central finite differences") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    CAPTURE(seed);
    auto x = random_tensor(rng, {1, 4, 2, 2, 2}, -2.0, 2.0, true);
    Tensor probe;
    {
      NoGradGuard no_grad;
      probe = make_probe(rng, x.shape());
    }
    auto fn = [&] { return sum_all(mul(softmax_channel(x), probe)); };
    auto res = check_gradients(fn, {x});
    CHECK(res.max_rel_err < kGradTol);
  }
}

TEST_CASE("elementwise and reduction ops pass gradient checks") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    CAPTURE(seed);
    auto a = random_tensor(rng, {3, 4}, -1.0, 1.0, true);
    auto b = random_tensor(rng, {3, 4}, -1.0, 1.0, true);
    Tensor probe = make_probe(rng, {3, 4});
    {
      auto fn = [&] { return sum_all(mul(add(a, b), probe)); };
      CHECK(check_gradients(fn, {a, b}).max_rel_err < kGradTol);
    }
    {
      auto fn = [&] { return sum_all(mul(mul(a, b), probe)); };
      CHECK(check_gradients(fn, {a, b}).max_rel_err < kGradTol);
    }
    {
      auto fn = [&] { return sum_all(mul(scale(a, -1.75), probe)); };
      CHECK(check_gradients(fn, {a}).max_rel_err < kGradTol);
    }
  }
}

TEST_CASE("concat_channel splits gradients back to its inputs") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    CAPTURE(seed);
    auto a = random_tensor(rng, {1, 2, 2, 2, 2}, -1.0, 1.0, true);
    auto b = random_tensor(rng, {1, 1, 2, 2, 2}, -1.0, 1.0, true);
    auto c = random_tensor(rng, {1, 3, 2, 2, 2}, -1.0, 1.0, true);
    Tensor probe = make_probe(rng, {1, 6, 2, 2, 2});
    auto fn = [&] {
      std::vector<Tensor> parts = {a, b, c};
      return sum_all(mul(concat_channel(parts), probe));
    };
    CHECK(check_gradients(fn, {a, b, c}).max_rel_err < kGradTol);
  }
}

TEST_CASE("weighted_sum differentiates inputs and coefficients") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    CAPTURE(seed);
    auto a = random_tensor(rng, {1, 2, 2, 2, 2}, -1.0, 1.0, true);
    auto b = random_tensor(rng, {1, 2, 2, 2, 2}, -1.0, 1.0, true);
    auto c = random_tensor(rng, {1, 2, 2, 2, 2}, -1.0, 1.0, true);
    auto gamma = random_tensor(rng, {3}, 0.1, 1.0, true);
    Tensor probe = make_probe(rng, {1, 2, 2, 2, 2});
    auto fn = [&] {
      std::vector<Tensor> parts = {a, b, c};
      return sum_all(mul(weighted_sum(parts, gamma), probe));
    };
    CHECK(check_gradients(fn, {a, b, c, gamma}).max_rel_err < kGradTol);
  }
}

TEST_CASE("linear gradients match central finite differences") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    CAPTURE(seed);
    auto x = random_tensor(rng, {3, 4}, -1.0, 1.0, true);
    auto w = random_tensor(rng, {2, 4}, -1.0, 1.0, true);
    auto b = random_tensor(rng, {2}, -0.5, 0.5, true);
    Tensor probe = make_probe(rng, {3, 2});
    auto fn = [&] { return sum_all(mul(linear(x, w, b), probe)); };
    CHECK(check_gradients(fn, {x, w, b}).max_rel_err < kGradTol);
  }
}

TEST_CASE("a tensor used twice accumulates both branch gradients") {
  auto x = Tensor::from_values({4}, {0.5, -1.25, 2.0, 3.5}, true);
  // f(x) = sum(x*x + 3x) so df/dx = 2x + 3
  backward(sum_all(add(mul(x, x), scale(x, 3.0))));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(x.grad()[i] ==
          doctest::Approx(2.0 * x.values()[i] + 3.0).epsilon(1e-12));
  }
}

TEST_CASE("gradients accumulate across graphs until cleared") {
  auto x = Tensor::from_values({3}, {1.0, 2.0, 3.0}, true);
  backward(sum_all(mul(x, x)));
  backward(sum_all(mul(x, x)));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(x.grad()[i] == doctest::Approx(4.0 * x.values()[i]).epsilon(1e-12));
  }
  x.zero_grad();
  backward(sum_all(mul(x, x)));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("no-grad mode records no graph") {
  Rng rng(1);
  auto x = random_tensor(rng, {1, 1, 3, 3, 3}, -1.0, 1.0, true);
  auto w = random_tensor(rng, {1, 1, 2, 2, 2}, -1.0, 1.0, true);
  NoGradGuard no_grad;
  auto y = conv3d(x, w, Tensor(), ConvSpec::cubic(1, 1, 2));
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
  CHECK_FALSE(static_cast<bool>(y.node()->backward));
}

TEST_CASE("shape violations raise typed errors") {
  auto x = Tensor::zeros({1, 2, 4, 4, 4});
  auto w = Tensor::zeros({3, 2, 3, 3, 3});
  CHECK_THROWS_AS(
      (void)conv3d(x, w, Tensor(), ConvSpec::cubic(3, 3, 3)),
      PipelineError);
  CHECK_THROWS_AS(
      (void)conv3d(x, w, Tensor::zeros({4}), ConvSpec::cubic(2, 3, 3, 1, 1)),
      PipelineError);
  CHECK_THROWS_AS((void)add(x, Tensor::zeros({1, 3, 4, 4, 4})),
                  PipelineError);
  CHECK_THROWS_AS((void)maxpool3d(x, 5, 5), PipelineError);
  auto tw = Tensor::zeros({2, 3, 2, 2, 2});
  auto bad = ConvSpec::cubic(2, 3, 2, 2, 0, 2);
  CHECK_THROWS_AS((void)transposed_conv3d(x, tw, Tensor(), bad),
                  PipelineError);
  CHECK_THROWS_AS((void)backward(Tensor::zeros({3})), PipelineError);
}

}  // TEST_SUITE
