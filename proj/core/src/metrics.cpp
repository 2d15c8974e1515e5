#include "refrm3d/metrics.hpp"

#include "refrm3d/losses.hpp"

namespace refrm3d {

namespace {

void check_same_dims(Dims3 a, Dims3 b, const char* what) {
  if (!(a == b)) {
    fail(ErrorCode::ShapeError,
         std::string(what) + ": prediction and reference dims differ (" +
             dims_to_string(a) + " vs " + dims_to_string(b) + ")");
  }
}

}  // namespace

ConfusionCounts confusion_counts(const Mask3D& prediction,
                                 const Mask3D& reference) {
  check_same_dims(prediction.dims, reference.dims, "confusion_counts");
  ConfusionCounts counts;
  for (std::size_t i = 0; i < prediction.on.size(); ++i) {
    const bool p = prediction.on[i] != 0;
    const bool r = reference.on[i] != 0;
    if (p && r) ++counts.tp;
    else if (p && !r) ++counts.fp;
    else if (!p && r) ++counts.fn;
    else ++counts.tn;
  }
  return counts;
}

OverlapMetrics overlap_metrics(const Mask3D& prediction,
                               const Mask3D& reference) {
  const auto counts = confusion_counts(prediction, reference);
  OverlapMetrics out;
  const std::int64_t support = 2 * counts.tp + counts.fp + counts.fn;
  if (support == 0) {
    out.both_empty = true;
    out.dsc = 1.0;
    out.jcs = 1.0;
    return out;
  }
  out.dsc = 2.0 * static_cast<double>(counts.tp) /
            static_cast<double>(support);
  out.jcs = static_cast<double>(counts.tp) /
            static_cast<double>(counts.tp + counts.fp + counts.fn);
  return out;
}

ClassificationMetrics classification_metrics(const ConfusionCounts& counts) {
  ClassificationMetrics out;
  auto ratio = [&out](std::int64_t num, std::int64_t den) {
    if (den == 0) {
      out.division_by_zero = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  out.accuracy = ratio(counts.tp + counts.tn, counts.total());
  out.precision = ratio(counts.tp, counts.tp + counts.fp);
  out.sensitivity = ratio(counts.tp, counts.tp + counts.fn);
  out.specificity = ratio(counts.tn, counts.tn + counts.fp);
  return out;
}

std::vector<RegionEvaluation> evaluate_case(const LabelVolume& predicted,
                                            const LabelVolume& reference) {
  check_same_dims(predicted.dims, reference.dims, "evaluate_case");
  std::vector<RegionEvaluation> out;
  out.reserve(kAllRegions.size());
  for (RegionId region : kAllRegions) {
    RegionEvaluation eval;
    eval.region = region;
    const Mask3D pred_mask = region_mask(predicted, region);
    const Mask3D ref_mask = region_mask(reference, region);
    eval.counts = confusion_counts(pred_mask, ref_mask);
    eval.overlap = overlap_metrics(pred_mask, ref_mask);
    eval.classification = classification_metrics(eval.counts);
    out.push_back(eval);
  }
  return out;
}

LabelVolume predicted_labels(const Tensor& class_scores, Spacing spacing) {
  if (!class_scores.defined() || class_scores.shape().size() != 5 ||
      class_scores.shape()[0] != 1 ||
      class_scores.shape()[1] != kNumClasses) {
    fail(ErrorCode::ShapeError,
         "predicted_labels expects (1, 4, D, H, W) class scores");
  }
  const Dims3 dims{class_scores.shape()[2], class_scores.shape()[3],
                   class_scores.shape()[4]};
  const std::int64_t plane = static_cast<std::int64_t>(dims.voxels());
  LabelVolume labels(dims, spacing);
  const double* values = class_scores.values().data();
  for (std::int64_t i = 0; i < plane; ++i) {
    int best = 0;
    double best_score = values[i];
    for (int c = 1; c < kNumClasses; ++c) {
      const double score = values[c * plane + i];
      if (score > best_score) {  // strict: ties keep the lowest channel
        best_score = score;
        best = c;
      }
    }
    labels.labels[static_cast<std::size_t>(i)] = channel_to_label(best);
  }
  return labels;
}

}  // namespace refrm3d
