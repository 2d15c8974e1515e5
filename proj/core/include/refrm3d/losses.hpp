#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "refrm3d/tensor.hpp"
#include "refrm3d/volume.hpp"

namespace refrm3d {

// Segmentation classes are the background plus the three annotated tumor
// labels; label 4 maps onto the last channel.
inline constexpr int kNumClasses = 4;
int label_to_channel(std::uint8_t label);
std::uint8_t channel_to_label(int channel);

// One-hot encoding of a label volume as a constant (1, 4, D, H, W) tensor.
Tensor one_hot(const LabelVolume& labels);

struct ClassWeights {
  std::array<double, kNumClasses> dice = {1.0, 1.0, 1.0, 1.0};
  std::array<double, kNumClasses> focal_alpha = {1.0, 1.0, 1.0, 1.0};
  // True when a class never occurred and its frequency was floored to one
  // voxel to keep the inverse finite.
  bool missing_class = false;
};

// Inverse-frequency weights normalised to mean 1 for the dice term; the
// focal alphas are the same weights rescaled so the largest equals 1.
ClassWeights class_weights_from_counts(
    const std::array<std::int64_t, kNumClasses>& voxel_counts);
void accumulate_label_counts(const LabelVolume& labels,
                             std::array<std::int64_t, kNumClasses>& counts);

// Weighted soft dice loss over all classes jointly:
//   L = 1 - (2 * sum_c w_c <y_c, p_c> + eps) / (sum_c w_c sum(y_c + p_c) + eps)
// pred holds channel probabilities, target the matching one-hot volume.
Tensor dice_loss(const Tensor& pred, const Tensor& target,
                 std::span<const double> class_weights,
                 double epsilon = 1e-6);

// Mean focal loss -alpha_t * (1 - p_t)^gamma * log(p_t) over every voxel,
// where p_t is the predicted probability of the true class clamped to
// [1e-7, 1 - 1e-7]; clamped voxels contribute no gradient.
Tensor focal_loss(const Tensor& pred, const Tensor& target,
                  std::span<const double> class_alphas, double gamma = 2.0);

enum class LossCombine {
  Sum,  // dice + focal
  Max,  // the currently larger term; ties resolve to the dice term
};
Tensor combine_losses(const Tensor& dice, const Tensor& focal,
                      LossCombine mode);

// Stable sigmoid binary cross-entropy, averaged over rows and the active
// columns of `column_mask` (all columns when the mask is empty).
Tensor sigmoid_bce_loss(const Tensor& logits,
                        const std::vector<double>& targets,
                        const std::vector<bool>& column_mask = {});

// Training/evaluation accuracy proxy: one minus the unit-weight dice loss
// of the prediction against the one-hot target. Computed without autograd.
double dice_accuracy(const Tensor& pred, const Tensor& target);

}  // namespace refrm3d
