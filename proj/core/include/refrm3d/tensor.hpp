#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "refrm3d/errors.hpp"

namespace refrm3d {

// Reverse-mode autodiff over dense f64 tensors of rank <= 5. Network
// activations use the (batch, channel, depth, height, width) layout;
// classifier matrices use rank 2. Graphs are built define-by-run: every op
// records its parents and a backward closure unless gradients are disabled.

struct TensorNode {
  std::vector<std::int64_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily, same length as values
  bool requires_grad = false;
  std::string name;  // set for parameters
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<std::int64_t> shape,
                      bool requires_grad = false);
  static Tensor full(std::vector<std::int64_t> shape, double fill,
                     bool requires_grad = false);
  static Tensor from_values(std::vector<std::int64_t> shape,
                            std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::int64_t>& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->numel(); }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& mutable_values() { return node_->values; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  void set_name(const std::string& name) { node_->name = name; }
  const std::string& name() const { return node_->name; }
  void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }
  double item() const;

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Gradient recording is on by default; NoGradGuard disables it for the
// enclosing scope (inference paths drop the graph and the memory with it).
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Accumulates gradients of `loss` (a scalar) into every requires_grad node
// by reverse topological traversal. Gradients add up across calls until
// zero_grad is invoked on the parameters.
void backward(const Tensor& loss);

struct ConvSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::array<int, 3> kernel = {3, 3, 3};
  int stride = 1;
  int padding = 0;
  int dilation = 1;

  static ConvSpec cubic(std::int64_t in_ch, std::int64_t out_ch, int k,
                        int stride = 1, int padding = 0, int dilation = 1) {
    return ConvSpec{in_ch, out_ch, {k, k, k}, stride, padding, dilation};
  }
  // floor((n + 2p - d*(k-1) - 1) / s) + 1 per spatial axis
  std::array<std::int64_t, 3> conv_output_dims(
      const std::array<std::int64_t, 3>& in) const;
  // (n - 1) * s - 2p + k per spatial axis (dilation must be 1)
  std::array<std::int64_t, 3> transposed_output_dims(
      const std::array<std::int64_t, 3>& in) const;
};

// x: (B, Cin, D, H, W); w: (Cout, Cin, kd, kh, kw); b: (Cout) or undefined.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b,
              const ConvSpec& spec);
// x: (B, Cin, D, H, W); w: (Cin, Cout, kd, kh, kw); b: (Cout) or undefined.
Tensor transposed_conv3d(const Tensor& x, const Tensor& w, const Tensor& b,
                         const ConvSpec& spec);
// No padding; ties resolve to the lowest linear index inside the window.
Tensor maxpool3d(const Tensor& x, int window, int stride);
// Integer scale factor, half-voxel-centre convention, clamped at borders.
Tensor upsample_trilinear3d(const Tensor& x, int scale);

Tensor relu(const Tensor& x);
// Softmax over the channel axis of a (B, C, D, H, W) tensor.
Tensor softmax_channel(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);     // same shape
Tensor mul(const Tensor& a, const Tensor& b);     // elementwise, same shape
Tensor scale(const Tensor& x, double factor);
Tensor concat_channel(std::span<const Tensor> parts);
// sum_l gamma[l] * parts[l]; gamma has shape (L), parts share one shape.
Tensor weighted_sum(std::span<const Tensor> parts, const Tensor& gamma);
Tensor sum_all(const Tensor& x);  // scalar
// x: (N, F); w: (M, F); b: (M) or undefined -> (N, M)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace refrm3d
