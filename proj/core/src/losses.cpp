#include "refrm3d/losses.hpp"

#include <algorithm>
#include <cmath>

namespace refrm3d {

namespace {

constexpr double kFocalClampLo = 1e-7;
constexpr double kFocalClampHi = 1.0 - 1e-7;

void check_pred_target(const Tensor& pred, const Tensor& target,
                       std::span<const double> per_class, const char* what) {
  if (!pred.defined() || pred.shape().size() != 5) {
    fail(ErrorCode::ShapeError,
         std::string(what) + ": prediction must be (B, C, D, H, W)");
  }
  if (pred.shape() != target.shape()) {
    fail(ErrorCode::ShapeError,
         std::string(what) + ": prediction and target shapes differ");
  }
  if (static_cast<std::int64_t>(per_class.size()) != pred.shape()[1]) {
    fail(ErrorCode::ShapeError,
         std::string(what) + ": need one coefficient per class channel");
  }
}

}  // namespace

int label_to_channel(std::uint8_t label) {
  switch (label) {
    case 0: return 0;
    case 1: return 1;
    case 2: return 2;
    case 4: return 3;
    default:
      fail(ErrorCode::InvalidLabels,
           "unsupported segmentation label " + std::to_string(label));
  }
}

std::uint8_t channel_to_label(int channel) {
  static constexpr std::uint8_t kLabels[kNumClasses] = {0, 1, 2, 4};
  if (channel < 0 || channel >= kNumClasses) {
    fail(ErrorCode::ShapeError, "class channel out of range");
  }
  return kLabels[channel];
}

Tensor one_hot(const LabelVolume& labels) {
  const std::int64_t plane = static_cast<std::int64_t>(labels.dims.voxels());
  Tensor out = Tensor::zeros({1, kNumClasses,
                              static_cast<std::int64_t>(labels.dims.d),
                              static_cast<std::int64_t>(labels.dims.h),
                              static_cast<std::int64_t>(labels.dims.w)});
  auto& values = out.mutable_values();
  for (std::int64_t i = 0; i < plane; ++i) {
    const int c = label_to_channel(labels.labels[static_cast<std::size_t>(i)]);
    values[static_cast<std::size_t>(c * plane + i)] = 1.0;
  }
  return out;
}

void accumulate_label_counts(const LabelVolume& labels,
                             std::array<std::int64_t, kNumClasses>& counts) {
  for (std::uint8_t v : labels.labels) {
    ++counts[static_cast<std::size_t>(label_to_channel(v))];
  }
}

ClassWeights class_weights_from_counts(
    const std::array<std::int64_t, kNumClasses>& voxel_counts) {
  std::int64_t total = 0;
  for (auto c : voxel_counts) total += c;
  if (total <= 0) {
    fail(ErrorCode::EmptyDataset, "class weighting saw zero voxels");
  }

  ClassWeights out;
  std::array<double, kNumClasses> inv{};
  double mean_inv = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    std::int64_t count = voxel_counts[static_cast<std::size_t>(c)];
    if (count == 0) {
      out.missing_class = true;
      count = 1;  // floor absent classes to one voxel
    }
    const double freq = static_cast<double>(count) / static_cast<double>(total);
    inv[static_cast<std::size_t>(c)] = 1.0 / freq;
    mean_inv += inv[static_cast<std::size_t>(c)];
  }
  mean_inv /= kNumClasses;

  double max_w = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    out.dice[static_cast<std::size_t>(c)] =
        inv[static_cast<std::size_t>(c)] / mean_inv;
    max_w = std::max(max_w, out.dice[static_cast<std::size_t>(c)]);
  }
  for (int c = 0; c < kNumClasses; ++c) {
    out.focal_alpha[static_cast<std::size_t>(c)] =
        out.dice[static_cast<std::size_t>(c)] / max_w;
  }
  return out;
}

Tensor dice_loss(const Tensor& pred, const Tensor& target,
                 std::span<const double> class_weights, double epsilon) {
  check_pred_target(pred, target, class_weights, "dice_loss");
  const std::int64_t B = pred.shape()[0], C = pred.shape()[1];
  const std::int64_t plane =
      pred.shape()[2] * pred.shape()[3] * pred.shape()[4];

  double inter = 0.0;  // sum_c w_c <y, p>
  double mass = 0.0;   // sum_c w_c sum(y + p)
  const double* pv = pred.values().data();
  const double* yv = target.values().data();
  for (std::int64_t bb = 0; bb < B; ++bb) {
    for (std::int64_t c = 0; c < C; ++c) {
      const double w = class_weights[static_cast<std::size_t>(c)];
      const double* pc = pv + (bb * C + c) * plane;
      const double* yc = yv + (bb * C + c) * plane;
      double ci = 0.0, cm = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) {
        ci += yc[i] * pc[i];
        cm += yc[i] + pc[i];
      }
      inter += w * ci;
      mass += w * cm;
    }
  }
  const double denom = mass + epsilon;
  const double value = 1.0 - (2.0 * inter + epsilon) / denom;

  auto out = std::make_shared<TensorNode>();
  out->shape = {1};
  out->values = {value};
  if (grad_enabled() && pred.requires_grad()) {
    out->requires_grad = true;
    out->parents = {pred.node()};
    std::vector<double> weights(class_weights.begin(), class_weights.end());
    out->backward = [=, target_node = target.node(),
                     weights = std::move(weights)](TensorNode& self) {
      TensorNode& pn = *self.parents[0];
      const double g = self.grad[0];
      const double numer = 2.0 * inter + epsilon;
      const double* yvv = target_node->values.data();
      for (std::int64_t bb = 0; bb < B; ++bb) {
        for (std::int64_t c = 0; c < C; ++c) {
          const double w = weights[static_cast<std::size_t>(c)];
          const double* yc = yvv + (bb * C + c) * plane;
          double* gp = pn.grad.data() + (bb * C + c) * plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            // d/dp of -(2*inter+eps)/(mass+eps) via the quotient rule.
            gp[i] += g * (-(2.0 * w * yc[i] * denom - numer * w) /
                          (denom * denom));
          }
        }
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor focal_loss(const Tensor& pred, const Tensor& target,
                  std::span<const double> class_alphas, double gamma) {
  check_pred_target(pred, target, class_alphas, "focal_loss");
  const std::int64_t B = pred.shape()[0], C = pred.shape()[1];
  const std::int64_t plane =
      pred.shape()[2] * pred.shape()[3] * pred.shape()[4];
  const double count = static_cast<double>(B * plane);

  double total = 0.0;
  const double* pv = pred.values().data();
  const double* yv = target.values().data();
  for (std::int64_t bb = 0; bb < B; ++bb) {
    const double* pb = pv + bb * C * plane;
    const double* yb = yv + bb * C * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      for (std::int64_t c = 0; c < C; ++c) {
        if (yb[c * plane + i] <= 0.5) continue;
        const double p = std::clamp(pb[c * plane + i], kFocalClampLo,
                                    kFocalClampHi);
        total -= class_alphas[static_cast<std::size_t>(c)] *
                 std::pow(1.0 - p, gamma) * std::log(p);
        break;  // one-hot targets have a single true class per voxel
      }
    }
  }

  auto out = std::make_shared<TensorNode>();
  out->shape = {1};
  out->values = {total / count};
  if (grad_enabled() && pred.requires_grad()) {
    out->requires_grad = true;
    out->parents = {pred.node()};
    std::vector<double> alphas(class_alphas.begin(), class_alphas.end());
    out->backward = [=, target_node = target.node(),
                     alphas = std::move(alphas)](TensorNode& self) {
      TensorNode& pn = *self.parents[0];
      const double g = self.grad[0] / count;
      const double* yvv = target_node->values.data();
      for (std::int64_t bb = 0; bb < B; ++bb) {
        const double* yb = yvv + bb * C * plane;
        const double* pb = pn.values.data() + bb * C * plane;
        double* gb = pn.grad.data() + bb * C * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          for (std::int64_t c = 0; c < C; ++c) {
            if (yb[c * plane + i] <= 0.5) continue;
            const double p = pb[c * plane + i];
            if (p >= kFocalClampLo && p <= kFocalClampHi) {
              const double a = alphas[static_cast<std::size_t>(c)];
              const double q = 1.0 - p;
              gb[c * plane + i] +=
                  g * (a * gamma * std::pow(q, gamma - 1.0) * std::log(p) -
                       a * std::pow(q, gamma) / p);
            }
            break;
          }
        }
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor combine_losses(const Tensor& dice, const Tensor& focal,
                      LossCombine mode) {
  if (mode == LossCombine::Sum) return add(dice, focal);
  return dice.item() >= focal.item() ? dice : focal;
}

Tensor sigmoid_bce_loss(const Tensor& logits,
                        const std::vector<double>& targets,
                        const std::vector<bool>& column_mask) {
  if (!logits.defined() || logits.shape().size() != 2) {
    fail(ErrorCode::ShapeError, "sigmoid_bce_loss: logits must be (N, K)");
  }
  const std::int64_t N = logits.shape()[0], K = logits.shape()[1];
  if (static_cast<std::int64_t>(targets.size()) != N * K) {
    fail(ErrorCode::ShapeError, "sigmoid_bce_loss: target size mismatch");
  }
  std::vector<bool> mask = column_mask;
  if (mask.empty()) mask.assign(static_cast<std::size_t>(K), true);
  if (static_cast<std::int64_t>(mask.size()) != K) {
    fail(ErrorCode::ShapeError, "sigmoid_bce_loss: column mask size mismatch");
  }
  std::int64_t active = 0;
  for (bool m : mask) active += m ? 1 : 0;
  if (active == 0) {
    fail(ErrorCode::ShapeError, "sigmoid_bce_loss: all columns masked out");
  }
  const double denom = static_cast<double>(N * active);

  double total = 0.0;
  const double* zv = logits.values().data();
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t k = 0; k < K; ++k) {
      if (!mask[static_cast<std::size_t>(k)]) continue;
      const double z = zv[n * K + k];
      const double t = targets[static_cast<std::size_t>(n * K + k)];
      total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
  }

  auto out = std::make_shared<TensorNode>();
  out->shape = {1};
  out->values = {total / denom};
  if (grad_enabled() && logits.requires_grad()) {
    out->requires_grad = true;
    out->parents = {logits.node()};
    out->backward = [=, mask = std::move(mask)](TensorNode& self) {
      TensorNode& zn = *self.parents[0];
      const double g = self.grad[0] / denom;
      for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t k = 0; k < K; ++k) {
          if (!mask[static_cast<std::size_t>(k)]) continue;
          const double z = zn.values[static_cast<std::size_t>(n * K + k)];
          const double sig =
              z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                       : std::exp(z) / (1.0 + std::exp(z));
          zn.grad[static_cast<std::size_t>(n * K + k)] +=
              g * (sig - targets[static_cast<std::size_t>(n * K + k)]);
        }
      }
    };
  }
  return Tensor(std::move(out));
}

double dice_accuracy(const Tensor& pred, const Tensor& target) {
  NoGradGuard no_grad;
  std::vector<double> unit(static_cast<std::size_t>(pred.shape()[1]), 1.0);
  return 1.0 - dice_loss(pred, target, unit).item();
}

}  // namespace refrm3d
