#include "refrm3d/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace refrm3d {

namespace {

thread_local bool g_grad_enabled = true;

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

void expect_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (!t.defined() || t.shape().size() != rank) {
    fail(ErrorCode::ShapeError,
         std::string(what) + ": expected rank " + std::to_string(rank) +
             " tensor, got " +
             (t.defined() ? shape_to_string(t.shape()) : "<undefined>"));
  }
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::ShapeError, std::string(what) + ": shape mismatch " +
                                    shape_to_string(a.shape()) + " vs " +
                                    shape_to_string(b.shape()));
  }
}

// Exact at t == 0 and t == 1, and constant inputs stay constant.
double lerp_exact(double a, double b, double t) { return a + t * (b - a); }

struct AxisTap {
  std::int64_t i0 = 0;
  std::int64_t i1 = 0;
  double t = 0.0;
};

// Half-voxel-centre source coordinate for integer upsampling, clamped so
// border outputs re-use the edge sample.
std::vector<AxisTap> upsample_taps(std::int64_t in, int scale) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(in) * scale);
  for (std::int64_t o = 0; o < in * scale; ++o) {
    double src = (static_cast<double>(o) + 0.5) / scale - 0.5;
    if (src < 0.0) src = 0.0;
    double limit = static_cast<double>(in - 1);
    if (src > limit) src = limit;
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    AxisTap tap;
    tap.i0 = i0;
    tap.i1 = std::min(i0 + 1, in - 1);
    tap.t = src - static_cast<double>(i0);
    taps[static_cast<std::size_t>(o)] = tap;
  }
  return taps;
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double fill,
                    bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values.assign(static_cast<std::size_t>(shape_numel(node->shape)),
                      fill);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(std::vector<std::int64_t> shape,
                           std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    fail(ErrorCode::ShapeError,
         "tensor literal: " + std::to_string(values.size()) +
             " values do not fill shape " + shape_to_string(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

double Tensor::item() const {
  if (!defined() || numel() != 1) {
    fail(ErrorCode::ShapeError, "item() requires a scalar tensor");
  }
  return node_->values[0];
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    fail(ErrorCode::ShapeError, "backward() requires a scalar loss");
  }
  if (!loss.node()->requires_grad) return;

  // Iterative post-order DFS over parent edges; the reversed post-order
  // visits every consumer before its producers, so each node's gradient is
  // complete by the time its backward closure runs.
  std::vector<TensorNode*> order;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  std::vector<TensorNode*> seen;
  auto mark_seen = [&seen](TensorNode* n) {
    if (std::find(seen.begin(), seen.end(), n) != seen.end()) return false;
    seen.push_back(n);
    return true;
  };
  if (mark_seen(loss.node().get())) stack.emplace_back(loss.node().get(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (parent->requires_grad && mark_seen(parent)) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (!node->backward) continue;
    for (auto& parent : node->parents) parent->ensure_grad();
    node->backward(*node);
  }
}

std::array<std::int64_t, 3> ConvSpec::conv_output_dims(
    const std::array<std::int64_t, 3>& in) const {
  std::array<std::int64_t, 3> out{};
  for (int a = 0; a < 3; ++a) {
    std::int64_t span =
        in[a] + 2 * padding - static_cast<std::int64_t>(dilation) * (kernel[a] - 1) - 1;
    if (span < 0) {
      fail(ErrorCode::ShapeError,
           "conv3d: kernel does not fit input extent " + std::to_string(in[a]));
    }
    out[a] = span / stride + 1;
  }
  return out;
}

std::array<std::int64_t, 3> ConvSpec::transposed_output_dims(
    const std::array<std::int64_t, 3>& in) const {
  std::array<std::int64_t, 3> out{};
  for (int a = 0; a < 3; ++a) {
    out[a] = (in[a] - 1) * stride - 2 * padding + kernel[a];
    if (out[a] <= 0) {
      fail(ErrorCode::ShapeError,
           "transposed_conv3d: non-positive output extent");
    }
  }
  return out;
}

namespace {

void check_conv_inputs(const Tensor& x, const Tensor& w, const Tensor& b,
                       const ConvSpec& spec, bool transposed) {
  const char* what = transposed ? "transposed_conv3d" : "conv3d";
  expect_rank(x, 5, what);
  expect_rank(w, 5, what);
  if (x.shape()[1] != spec.in_channels) {
    fail(ErrorCode::ShapeError,
         std::string(what) + ": input has " + std::to_string(x.shape()[1]) +
             " channels, spec expects " + std::to_string(spec.in_channels));
  }
  std::vector<std::int64_t> want =
      transposed ? std::vector<std::int64_t>{spec.in_channels,
                                             spec.out_channels, spec.kernel[0],
                                             spec.kernel[1], spec.kernel[2]}
                 : std::vector<std::int64_t>{spec.out_channels,
                                             spec.in_channels, spec.kernel[0],
                                             spec.kernel[1], spec.kernel[2]};
  if (w.shape() != want) {
    fail(ErrorCode::ShapeError, std::string(what) + ": weight shape " +
                                    shape_to_string(w.shape()) +
                                    " does not match spec " +
                                    shape_to_string(want));
  }
  if (b.defined() &&
      (b.shape().size() != 1 || b.shape()[0] != spec.out_channels)) {
    fail(ErrorCode::ShapeError,
         std::string(what) + ": bias must have shape (" +
             std::to_string(spec.out_channels) + ")");
  }
  if (spec.stride < 1 || spec.dilation < 1 || spec.padding < 0) {
    fail(ErrorCode::ShapeError,
         std::string(what) + ": stride/dilation must be >= 1, padding >= 0");
  }
  if (transposed && spec.dilation != 1) {
    fail(ErrorCode::ShapeError, "transposed_conv3d: dilation must be 1");
  }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b,
              const ConvSpec& spec) {
  check_conv_inputs(x, w, b, spec, /*transposed=*/false);
  const std::int64_t B = x.shape()[0], Cin = x.shape()[1];
  const std::int64_t D = x.shape()[2], H = x.shape()[3], W = x.shape()[4];
  const std::int64_t Cout = spec.out_channels;
  const auto out_sp = spec.conv_output_dims({D, H, W});
  const std::int64_t OD = out_sp[0], OH = out_sp[1], OW = out_sp[2];
  const std::int64_t kd = spec.kernel[0], kh = spec.kernel[1],
                     kw = spec.kernel[2];
  const std::int64_t s = spec.stride, p = spec.padding, dil = spec.dilation;

  auto out = std::make_shared<TensorNode>();
  out->shape = {B, Cout, OD, OH, OW};
  out->values.assign(static_cast<std::size_t>(B * Cout * OD * OH * OW), 0.0);

  const double* xv = x.values().data();
  const double* wv = w.values().data();
  double* ov = out->values.data();
  for (std::int64_t bb = 0; bb < B; ++bb) {
    for (std::int64_t co = 0; co < Cout; ++co) {
      const double bias = b.defined() ? b.values()[co] : 0.0;
      double* oplane = ov + ((bb * Cout + co) * OD) * OH * OW;
      for (std::int64_t oz = 0; oz < OD; ++oz) {
        for (std::int64_t oy = 0; oy < OH; ++oy) {
          for (std::int64_t ox = 0; ox < OW; ++ox) {
            double acc = bias;
            for (std::int64_t ci = 0; ci < Cin; ++ci) {
              const double* xc = xv + ((bb * Cin + ci) * D) * H * W;
              const double* wc = wv + ((co * Cin + ci) * kd) * kh * kw;
              for (std::int64_t kz = 0; kz < kd; ++kz) {
                const std::int64_t iz = oz * s - p + kz * dil;
                if (iz < 0 || iz >= D) continue;
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                  const std::int64_t iy = oy * s - p + ky * dil;
                  if (iy < 0 || iy >= H) continue;
                  const double* xrow = xc + (iz * H + iy) * W;
                  const double* wrow = wc + (kz * kh + ky) * kw;
                  for (std::int64_t kx = 0; kx < kw; ++kx) {
                    const std::int64_t ix = ox * s - p + kx * dil;
                    if (ix < 0 || ix >= W) continue;
                    acc += xrow[ix] * wrow[kx];
                  }
                }
              }
            }
            oplane[(oz * OH + oy) * OW + ox] = acc;
          }
        }
      }
    }
  }

  bool record = grad_enabled() && (x.requires_grad() || w.requires_grad() ||
                                   (b.defined() && b.requires_grad()));
  if (record) {
    out->requires_grad = true;
    out->parents = {x.node(), w.node()};
    if (b.defined()) out->parents.push_back(b.node());
    out->backward = [=](TensorNode& self) {
      TensorNode& xn = *self.parents[0];
      TensorNode& wn = *self.parents[1];
      TensorNode* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
      const double* go = self.grad.data();
      const double* xvv = xn.values.data();
      const double* wvv = wn.values.data();
      for (std::int64_t bb = 0; bb < B; ++bb) {
        for (std::int64_t co = 0; co < Cout; ++co) {
          const double* gplane = go + ((bb * Cout + co) * OD) * OH * OW;
          for (std::int64_t oz = 0; oz < OD; ++oz) {
            for (std::int64_t oy = 0; oy < OH; ++oy) {
              for (std::int64_t ox = 0; ox < OW; ++ox) {
                const double g = gplane[(oz * OH + oy) * OW + ox];
                if (g == 0.0) continue;
                if (bn) bn->grad[co] += g;
                for (std::int64_t ci = 0; ci < Cin; ++ci) {
                  const std::int64_t xoff = ((bb * Cin + ci) * D) * H * W;
                  const std::int64_t woff = ((co * Cin + ci) * kd) * kh * kw;
                  for (std::int64_t kz = 0; kz < kd; ++kz) {
                    const std::int64_t iz = oz * s - p + kz * dil;
                    if (iz < 0 || iz >= D) continue;
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                      const std::int64_t iy = oy * s - p + ky * dil;
                      if (iy < 0 || iy >= H) continue;
                      for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const std::int64_t ix = ox * s - p + kx * dil;
                        if (ix < 0 || ix >= W) continue;
                        const std::int64_t xi = xoff + (iz * H + iy) * W + ix;
                        const std::int64_t wi = woff + (kz * kh + ky) * kw + kx;
                        wn.grad[wi] += g * xvv[xi];
                        xn.grad[xi] += g * wvv[wi];
                      }
                    }
                  }
                }
              }
            }
          }
        }
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor transposed_conv3d(const Tensor& x, const Tensor& w, const Tensor& b,
                         const ConvSpec& spec) {
  check_conv_inputs(x, w, b, spec, /*transposed=*/true);
  const std::int64_t B = x.shape()[0], Cin = x.shape()[1];
  const std::int64_t D = x.shape()[2], H = x.shape()[3], W = x.shape()[4];
  const std::int64_t Cout = spec.out_channels;
  const auto out_sp = spec.transposed_output_dims({D, H, W});
  const std::int64_t OD = out_sp[0], OH = out_sp[1], OW = out_sp[2];
  const std::int64_t kd = spec.kernel[0], kh = spec.kernel[1],
                     kw = spec.kernel[2];
  const std::int64_t s = spec.stride, p = spec.padding;

  auto out = std::make_shared<TensorNode>();
  out->shape = {B, Cout, OD, OH, OW};
  out->values.assign(static_cast<std::size_t>(B * Cout * OD * OH * OW), 0.0);

  const double* xv = x.values().data();
  const double* wv = w.values().data();
  double* ov = out->values.data();
  for (std::int64_t bb = 0; bb < B; ++bb) {
    for (std::int64_t ci = 0; ci < Cin; ++ci) {
      const double* xplane = xv + ((bb * Cin + ci) * D) * H * W;
      for (std::int64_t iz = 0; iz < D; ++iz) {
        for (std::int64_t iy = 0; iy < H; ++iy) {
          for (std::int64_t ix = 0; ix < W; ++ix) {
            const double v = xplane[(iz * H + iy) * W + ix];
            for (std::int64_t co = 0; co < Cout; ++co) {
              double* oc = ov + ((bb * Cout + co) * OD) * OH * OW;
              const double* wc = wv + ((ci * Cout + co) * kd) * kh * kw;
              for (std::int64_t kz = 0; kz < kd; ++kz) {
                const std::int64_t oz = iz * s - p + kz;
                if (oz < 0 || oz >= OD) continue;
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                  const std::int64_t oy = iy * s - p + ky;
                  if (oy < 0 || oy >= OH) continue;
                  double* orow = oc + (oz * OH + oy) * OW;
                  const double* wrow = wc + (kz * kh + ky) * kw;
                  for (std::int64_t kx = 0; kx < kw; ++kx) {
                    const std::int64_t ox = ix * s - p + kx;
                    if (ox < 0 || ox >= OW) continue;
                    orow[ox] += v * wrow[kx];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  if (b.defined()) {
    const std::int64_t plane = OD * OH * OW;
    for (std::int64_t bb = 0; bb < B; ++bb) {
      for (std::int64_t co = 0; co < Cout; ++co) {
        double* oc = ov + (bb * Cout + co) * plane;
        const double bias = b.values()[co];
        for (std::int64_t i = 0; i < plane; ++i) oc[i] += bias;
      }
    }
  }

  bool record = grad_enabled() && (x.requires_grad() || w.requires_grad() ||
                                   (b.defined() && b.requires_grad()));
  if (record) {
    out->requires_grad = true;
    out->parents = {x.node(), w.node()};
    if (b.defined()) out->parents.push_back(b.node());
    out->backward = [=](TensorNode& self) {
      TensorNode& xn = *self.parents[0];
      TensorNode& wn = *self.parents[1];
      TensorNode* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
      const double* go = self.grad.data();
      const double* xvv = xn.values.data();
      const double* wvv = wn.values.data();
      if (bn) {
        const std::int64_t plane = OD * OH * OW;
        for (std::int64_t bb = 0; bb < B; ++bb) {
          for (std::int64_t co = 0; co < Cout; ++co) {
            const double* gc = go + (bb * Cout + co) * plane;
            double acc = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) acc += gc[i];
            bn->grad[co] += acc;
          }
        }
      }
      for (std::int64_t bb = 0; bb < B; ++bb) {
        for (std::int64_t ci = 0; ci < Cin; ++ci) {
          const std::int64_t xoff = ((bb * Cin + ci) * D) * H * W;
          for (std::int64_t iz = 0; iz < D; ++iz) {
            for (std::int64_t iy = 0; iy < H; ++iy) {
              for (std::int64_t ix = 0; ix < W; ++ix) {
                const std::int64_t xi = xoff + (iz * H + iy) * W + ix;
                const double v = xvv[xi];
                double accx = 0.0;
                for (std::int64_t co = 0; co < Cout; ++co) {
                  const double* gc = go + ((bb * Cout + co) * OD) * OH * OW;
                  const std::int64_t woff = ((ci * Cout + co) * kd) * kh * kw;
                  for (std::int64_t kz = 0; kz < kd; ++kz) {
                    const std::int64_t oz = iz * s - p + kz;
                    if (oz < 0 || oz >= OD) continue;
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                      const std::int64_t oy = iy * s - p + ky;
                      if (oy < 0 || oy >= OH) continue;
                      for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const std::int64_t ox = ix * s - p + kx;
                        if (ox < 0 || ox >= OW) continue;
                        const double g = gc[(oz * OH + oy) * OW + ox];
                        const std::int64_t wi =
                            woff + (kz * kh + ky) * kw + kx;
                        accx += g * wvv[wi];
                        wn.grad[wi] += g * v;
                      }
                    }
                  }
                }
                xn.grad[xi] += accx;
              }
            }
          }
        }
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor maxpool3d(const Tensor& x, int window, int stride) {
  expect_rank(x, 5, "maxpool3d");
  if (window < 1 || stride < 1) {
    fail(ErrorCode::ShapeError, "maxpool3d: window and stride must be >= 1");
  }
  const std::int64_t B = x.shape()[0], C = x.shape()[1];
  const std::int64_t D = x.shape()[2], H = x.shape()[3], W = x.shape()[4];
  if (D < window || H < window || W < window) {
    fail(ErrorCode::ShapeError, "maxpool3d: window exceeds input extent");
  }
  const std::int64_t OD = (D - window) / stride + 1;
  const std::int64_t OH = (H - window) / stride + 1;
  const std::int64_t OW = (W - window) / stride + 1;

  auto out = std::make_shared<TensorNode>();
  out->shape = {B, C, OD, OH, OW};
  out->values.assign(static_cast<std::size_t>(B * C * OD * OH * OW), 0.0);
  std::vector<std::int64_t> argmax(out->values.size(), 0);

  const double* xv = x.values().data();
  double* ov = out->values.data();
  std::int64_t oi = 0;
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const double* xc = xv + bc * D * H * W;
    for (std::int64_t oz = 0; oz < OD; ++oz) {
      for (std::int64_t oy = 0; oy < OH; ++oy) {
        for (std::int64_t ox = 0; ox < OW; ++ox, ++oi) {
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t best_idx = 0;
          // C-order scan with a strict comparison keeps the first (lowest
          // linear index) element of any tie.
          for (std::int64_t kz = 0; kz < window; ++kz) {
            for (std::int64_t ky = 0; ky < window; ++ky) {
              for (std::int64_t kx = 0; kx < window; ++kx) {
                const std::int64_t xi = ((oz * stride + kz) * H +
                                         (oy * stride + ky)) *
                                            W +
                                        (ox * stride + kx);
                if (xc[xi] > best) {
                  best = xc[xi];
                  best_idx = xi;
                }
              }
            }
          }
          ov[oi] = best;
          argmax[static_cast<std::size_t>(oi)] = bc * D * H * W + best_idx;
        }
      }
    }
  }

  if (grad_enabled() && x.requires_grad()) {
    out->requires_grad = true;
    out->parents = {x.node()};
    out->backward = [argmax = std::move(argmax)](TensorNode& self) {
      TensorNode& xn = *self.parents[0];
      for (std::size_t i = 0; i < argmax.size(); ++i) {
        xn.grad[static_cast<std::size_t>(argmax[i])] += self.grad[i];
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor upsample_trilinear3d(const Tensor& x, int scale) {
  expect_rank(x, 5, "upsample_trilinear3d");
  if (scale < 1) fail(ErrorCode::ShapeError, "upsample: scale must be >= 1");
  const std::int64_t B = x.shape()[0], C = x.shape()[1];
  const std::int64_t D = x.shape()[2], H = x.shape()[3], W = x.shape()[4];
  const std::int64_t OD = D * scale, OH = H * scale, OW = W * scale;

  const auto tz = upsample_taps(D, scale);
  const auto ty = upsample_taps(H, scale);
  const auto tx = upsample_taps(W, scale);

  auto out = std::make_shared<TensorNode>();
  out->shape = {B, C, OD, OH, OW};
  out->values.resize(static_cast<std::size_t>(B * C * OD * OH * OW));

  const double* xv = x.values().data();
  double* ov = out->values.data();
  std::int64_t oi = 0;
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const double* xc = xv + bc * D * H * W;
    for (std::int64_t oz = 0; oz < OD; ++oz) {
      const auto& az = tz[static_cast<std::size_t>(oz)];
      for (std::int64_t oy = 0; oy < OH; ++oy) {
        const auto& ay = ty[static_cast<std::size_t>(oy)];
        const double* r00 = xc + (az.i0 * H + ay.i0) * W;
        const double* r01 = xc + (az.i0 * H + ay.i1) * W;
        const double* r10 = xc + (az.i1 * H + ay.i0) * W;
        const double* r11 = xc + (az.i1 * H + ay.i1) * W;
        for (std::int64_t ox = 0; ox < OW; ++ox, ++oi) {
          const auto& ax = tx[static_cast<std::size_t>(ox)];
          const double a0 = lerp_exact(r00[ax.i0], r00[ax.i1], ax.t);
          const double a1 = lerp_exact(r01[ax.i0], r01[ax.i1], ax.t);
          const double a2 = lerp_exact(r10[ax.i0], r10[ax.i1], ax.t);
          const double a3 = lerp_exact(r11[ax.i0], r11[ax.i1], ax.t);
          ov[oi] = lerp_exact(lerp_exact(a0, a1, ay.t),
                              lerp_exact(a2, a3, ay.t), az.t);
        }
      }
    }
  }

  if (grad_enabled() && x.requires_grad()) {
    out->requires_grad = true;
    out->parents = {x.node()};
    out->backward = [=](TensorNode& self) {
      TensorNode& xn = *self.parents[0];
      const double* go = self.grad.data();
      std::int64_t gi = 0;
      for (std::int64_t bc = 0; bc < B * C; ++bc) {
        double* gx = xn.grad.data() + bc * D * H * W;
        for (std::int64_t oz = 0; oz < OD; ++oz) {
          const auto& az = tz[static_cast<std::size_t>(oz)];
          for (std::int64_t oy = 0; oy < OH; ++oy) {
            const auto& ay = ty[static_cast<std::size_t>(oy)];
            for (std::int64_t ox = 0; ox < OW; ++ox, ++gi) {
              const auto& ax = tx[static_cast<std::size_t>(ox)];
              const double g = go[gi];
              if (g == 0.0) continue;
              const double wz1 = az.t, wz0 = 1.0 - az.t;
              const double wy1 = ay.t, wy0 = 1.0 - ay.t;
              const double wx1 = ax.t, wx0 = 1.0 - ax.t;
              gx[(az.i0 * H + ay.i0) * W + ax.i0] += g * wz0 * wy0 * wx0;
              gx[(az.i0 * H + ay.i0) * W + ax.i1] += g * wz0 * wy0 * wx1;
              gx[(az.i0 * H + ay.i1) * W + ax.i0] += g * wz0 * wy1 * wx0;
              gx[(az.i0 * H + ay.i1) * W + ax.i1] += g * wz0 * wy1 * wx1;
              gx[(az.i1 * H + ay.i0) * W + ax.i0] += g * wz1 * wy0 * wx0;
              gx[(az.i1 * H + ay.i0) * W + ax.i1] += g * wz1 * wy0 * wx1;
              gx[(az.i1 * H + ay.i1) * W + ax.i0] += g * wz1 * wy1 * wx0;
              gx[(az.i1 * H + ay.i1) * W + ax.i1] += g * wz1 * wy1 * wx1;
            }
          }
        }
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor relu(const Tensor& x) {
  auto out = std::make_shared<TensorNode>();
  out->shape = x.shape();
  out->values.resize(x.values().size());
  for (std::size_t i = 0; i < out->values.size(); ++i) {
    out->values[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
  }
  if (grad_enabled() && x.requires_grad()) {
    out->requires_grad = true;
    out->parents = {x.node()};
    out->backward = [](TensorNode& self) {
      TensorNode& xn = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (xn.values[i] > 0.0) xn.grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor softmax_channel(const Tensor& x) {
  expect_rank(x, 5, "softmax_channel");
  const std::int64_t B = x.shape()[0], C = x.shape()[1];
  const std::int64_t plane = x.shape()[2] * x.shape()[3] * x.shape()[4];

  auto out = std::make_shared<TensorNode>();
  out->shape = x.shape();
  out->values.resize(x.values().size());
  const double* xv = x.values().data();
  double* ov = out->values.data();
  for (std::int64_t bb = 0; bb < B; ++bb) {
    const double* xb = xv + bb * C * plane;
    double* ob = ov + bb * C * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      double m = xb[i];
      for (std::int64_t c = 1; c < C; ++c) m = std::max(m, xb[c * plane + i]);
      double denom = 0.0;
      for (std::int64_t c = 0; c < C; ++c) {
        const double e = std::exp(xb[c * plane + i] - m);
        ob[c * plane + i] = e;
        denom += e;
      }
      for (std::int64_t c = 0; c < C; ++c) ob[c * plane + i] /= denom;
    }
  }

  if (grad_enabled() && x.requires_grad()) {
    out->requires_grad = true;
    out->parents = {x.node()};
    out->backward = [=](TensorNode& self) {
      TensorNode& xn = *self.parents[0];
      const double* go = self.grad.data();
      const double* y = self.values.data();
      for (std::int64_t bb = 0; bb < B; ++bb) {
        const double* yb = y + bb * C * plane;
        const double* gb = go + bb * C * plane;
        double* gx = xn.grad.data() + bb * C * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          double dot = 0.0;
          for (std::int64_t c = 0; c < C; ++c) {
            dot += gb[c * plane + i] * yb[c * plane + i];
          }
          for (std::int64_t c = 0; c < C; ++c) {
            gx[c * plane + i] +=
                yb[c * plane + i] * (gb[c * plane + i] - dot);
          }
        }
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "add");
  auto out = std::make_shared<TensorNode>();
  out->shape = a.shape();
  out->values.resize(a.values().size());
  for (std::size_t i = 0; i < out->values.size(); ++i) {
    out->values[i] = a.values()[i] + b.values()[i];
  }
  if (grad_enabled() && (a.requires_grad() || b.requires_grad())) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    out->backward = [](TensorNode& self) {
      for (auto& parent : self.parents) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          parent->grad[i] += self.grad[i];
        }
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "mul");
  auto out = std::make_shared<TensorNode>();
  out->shape = a.shape();
  out->values.resize(a.values().size());
  for (std::size_t i = 0; i < out->values.size(); ++i) {
    out->values[i] = a.values()[i] * b.values()[i];
  }
  if (grad_enabled() && (a.requires_grad() || b.requires_grad())) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    out->backward = [](TensorNode& self) {
      TensorNode& an = *self.parents[0];
      TensorNode& bn = *self.parents[1];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        an.grad[i] += self.grad[i] * bn.values[i];
        bn.grad[i] += self.grad[i] * an.values[i];
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor scale(const Tensor& x, double factor) {
  auto out = std::make_shared<TensorNode>();
  out->shape = x.shape();
  out->values.resize(x.values().size());
  for (std::size_t i = 0; i < out->values.size(); ++i) {
    out->values[i] = factor * x.values()[i];
  }
  if (grad_enabled() && x.requires_grad()) {
    out->requires_grad = true;
    out->parents = {x.node()};
    out->backward = [factor](TensorNode& self) {
      TensorNode& xn = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        xn.grad[i] += factor * self.grad[i];
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor concat_channel(std::span<const Tensor> parts) {
  if (parts.empty()) {
    fail(ErrorCode::ShapeError, "concat_channel: no inputs");
  }
  expect_rank(parts[0], 5, "concat_channel");
  const std::int64_t B = parts[0].shape()[0];
  const std::int64_t plane =
      parts[0].shape()[2] * parts[0].shape()[3] * parts[0].shape()[4];
  std::int64_t total_c = 0;
  for (const auto& part : parts) {
    expect_rank(part, 5, "concat_channel");
    if (part.shape()[0] != B || part.shape()[2] != parts[0].shape()[2] ||
        part.shape()[3] != parts[0].shape()[3] ||
        part.shape()[4] != parts[0].shape()[4]) {
      fail(ErrorCode::ShapeError,
           "concat_channel: inputs differ outside the channel axis");
    }
    total_c += part.shape()[1];
  }

  auto out = std::make_shared<TensorNode>();
  out->shape = {B, total_c, parts[0].shape()[2], parts[0].shape()[3],
                parts[0].shape()[4]};
  out->values.resize(static_cast<std::size_t>(B * total_c * plane));
  std::vector<std::int64_t> offsets;  // channel offset per part
  std::int64_t c_base = 0;
  for (const auto& part : parts) {
    offsets.push_back(c_base);
    const std::int64_t pc = part.shape()[1];
    for (std::int64_t bb = 0; bb < B; ++bb) {
      std::copy_n(part.values().data() + bb * pc * plane, pc * plane,
                  out->values.data() + (bb * total_c + c_base) * plane);
    }
    c_base += pc;
  }

  bool record = false;
  for (const auto& part : parts) record = record || part.requires_grad();
  if (grad_enabled() && record) {
    out->requires_grad = true;
    for (const auto& part : parts) out->parents.push_back(part.node());
    out->backward = [B, plane, total_c, offsets](TensorNode& self) {
      for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
        TensorNode& pn = *self.parents[pi];
        const std::int64_t pc = pn.shape[1];
        for (std::int64_t bb = 0; bb < B; ++bb) {
          const double* src =
              self.grad.data() + (bb * total_c + offsets[pi]) * plane;
          double* dst = pn.grad.data() + bb * pc * plane;
          for (std::int64_t i = 0; i < pc * plane; ++i) dst[i] += src[i];
        }
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor weighted_sum(std::span<const Tensor> parts, const Tensor& gamma) {
  if (parts.empty()) fail(ErrorCode::ShapeError, "weighted_sum: no inputs");
  expect_rank(gamma, 1, "weighted_sum coefficients");
  if (gamma.shape()[0] != static_cast<std::int64_t>(parts.size())) {
    fail(ErrorCode::ShapeError,
         "weighted_sum: coefficient count != input count");
  }
  for (const auto& part : parts) {
    expect_same_shape(part, parts[0], "weighted_sum");
  }

  auto out = std::make_shared<TensorNode>();
  out->shape = parts[0].shape();
  out->values.assign(parts[0].values().size(), 0.0);
  for (std::size_t l = 0; l < parts.size(); ++l) {
    const double g = gamma.values()[l];
    const double* pv = parts[l].values().data();
    for (std::size_t i = 0; i < out->values.size(); ++i) {
      out->values[i] += g * pv[i];
    }
  }

  bool record = gamma.requires_grad();
  for (const auto& part : parts) record = record || part.requires_grad();
  if (grad_enabled() && record) {
    out->requires_grad = true;
    for (const auto& part : parts) out->parents.push_back(part.node());
    out->parents.push_back(gamma.node());
    out->backward = [n = parts.size()](TensorNode& self) {
      TensorNode& gn = *self.parents[n];
      for (std::size_t l = 0; l < n; ++l) {
        TensorNode& pn = *self.parents[l];
        const double g = gn.values[l];
        double dot = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          pn.grad[i] += g * self.grad[i];
          dot += self.grad[i] * pn.values[i];
        }
        gn.grad[l] += dot;
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor sum_all(const Tensor& x) {
  auto out = std::make_shared<TensorNode>();
  out->shape = {1};
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out->values = {acc};
  if (grad_enabled() && x.requires_grad()) {
    out->requires_grad = true;
    out->parents = {x.node()};
    out->backward = [](TensorNode& self) {
      TensorNode& xn = *self.parents[0];
      const double g = self.grad[0];
      for (auto& gi : xn.grad) gi += g;
    };
  }
  return Tensor(std::move(out));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  expect_rank(x, 2, "linear");
  expect_rank(w, 2, "linear");
  const std::int64_t N = x.shape()[0], F = x.shape()[1];
  const std::int64_t M = w.shape()[0];
  if (w.shape()[1] != F) {
    fail(ErrorCode::ShapeError, "linear: weight expects " +
                                    std::to_string(w.shape()[1]) +
                                    " features, input has " +
                                    std::to_string(F));
  }
  if (b.defined() && (b.shape().size() != 1 || b.shape()[0] != M)) {
    fail(ErrorCode::ShapeError, "linear: bias must have shape (" +
                                    std::to_string(M) + ")");
  }

  auto out = std::make_shared<TensorNode>();
  out->shape = {N, M};
  out->values.resize(static_cast<std::size_t>(N * M));
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t m = 0; m < M; ++m) {
      double acc = b.defined() ? b.values()[m] : 0.0;
      const double* xr = x.values().data() + n * F;
      const double* wr = w.values().data() + m * F;
      for (std::int64_t f = 0; f < F; ++f) acc += xr[f] * wr[f];
      out->values[static_cast<std::size_t>(n * M + m)] = acc;
    }
  }

  bool record = grad_enabled() && (x.requires_grad() || w.requires_grad() ||
                                   (b.defined() && b.requires_grad()));
  if (record) {
    out->requires_grad = true;
    out->parents = {x.node(), w.node()};
    if (b.defined()) out->parents.push_back(b.node());
    out->backward = [N, M, F](TensorNode& self) {
      TensorNode& xn = *self.parents[0];
      TensorNode& wn = *self.parents[1];
      TensorNode* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
      for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t m = 0; m < M; ++m) {
          const double g = self.grad[static_cast<std::size_t>(n * M + m)];
          if (g == 0.0) continue;
          if (bn) bn->grad[m] += g;
          const double* xr = xn.values.data() + n * F;
          const double* wr = wn.values.data() + m * F;
          double* gxr = xn.grad.data() + n * F;
          double* gwr = wn.grad.data() + m * F;
          for (std::int64_t f = 0; f < F; ++f) {
            gxr[f] += g * wr[f];
            gwr[f] += g * xr[f];
          }
        }
      }
    };
  }
  return Tensor(std::move(out));
}

}  // namespace refrm3d
