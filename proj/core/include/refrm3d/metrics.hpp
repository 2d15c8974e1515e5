#pragma once

#include <cstdint>
#include <vector>

#include "refrm3d/tensor.hpp"
#include "refrm3d/volume.hpp"

namespace refrm3d {

// Voxel-overlap scores between a predicted and a reference binary mask.
struct OverlapMetrics {
  double dsc = 0.0;  // 2*TP / (2*TP + FP + FN)
  double jcs = 0.0;  // TP / (TP + FP + FN)
  // Both masks empty: overlap is defined as perfect agreement (1.0).
  bool both_empty = false;
};
OverlapMetrics overlap_metrics(const Mask3D& prediction,
                               const Mask3D& reference);

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;
  std::int64_t total() const { return tp + fp + tn + fn; }
};
ConfusionCounts confusion_counts(const Mask3D& prediction,
                                 const Mask3D& reference);

struct ClassificationMetrics {
  double accuracy = 0.0;     // (TP + TN) / total
  double precision = 0.0;    // TP / (TP + FP)
  double sensitivity = 0.0;  // TP / (TP + FN)
  double specificity = 0.0;  // TN / (TN + FP)
  // Any ratio with a zero denominator is scored 0 and flagged.
  bool division_by_zero = false;
};
ClassificationMetrics classification_metrics(const ConfusionCounts& counts);

struct RegionEvaluation {
  RegionId region;
  OverlapMetrics overlap;
  ConfusionCounts counts;
  ClassificationMetrics classification;
};
// Scores predicted against reference labels for WT, TC and ET.
std::vector<RegionEvaluation> evaluate_case(const LabelVolume& predicted,
                                            const LabelVolume& reference);

// Channel-argmax decoding of (1, 4, D, H, W) class scores into labels;
// ties resolve to the lowest channel.
LabelVolume predicted_labels(const Tensor& class_scores, Spacing spacing);

}  // namespace refrm3d
