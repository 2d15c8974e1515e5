#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "refrm3d/metrics.hpp"
#include "refrm3d/network.hpp"
#include "refrm3d/radiomics.hpp"
#include "refrm3d/volume.hpp"

namespace refrm3d {

// The presence classifier decides, per case, which tumour regions exist. Its
// binary outputs are ordered WT, ET, TC; label triples handed to training
// follow the same order.
inline constexpr std::array<RegionId, 3> kClassifierOutputs = {
    RegionId::WholeTumor, RegionId::EnhancingTumor, RegionId::TumorCore};

// Pooled descriptor of the network's class-logit head maps over one region
// of a predicted label volume. Layout: for each head in order, the per-channel
// means over the region's voxels, then the per-channel maxima, so the length
// is 2 x (total channels across heads). An empty region keeps that length but
// stays all zero and is flagged.
struct SegFeatureVector {
  std::vector<double> values;
  bool empty_region = false;
};

// Head maps must all be (1, C, D, H, W) on the same grid as `pred_labels`.
SegFeatureVector pool_seg_features(const std::vector<Tensor>& head_maps,
                                   const LabelVolume& pred_labels,
                                   RegionId region);

// Runs the network forward (gradients off) on `image` and pools its head
// maps; image and prediction grids must match.
SegFeatureVector extract_seg_features(const SegmentationNetwork& network,
                                      const MultiChannelVolume& image,
                                      const LabelVolume& pred_labels,
                                      RegionId region);

// The four shape features in the order the fusion stage consumes them.
std::vector<double> radiomics_feature_row(const RadiomicsFeatures& features);

// Per-dimension z-score fitted on training rows (population variance, so
// {1, 3} maps to {-1, +1}). Dimensions constant across the training set carry
// no signal; they are flagged and map to zero everywhere.
struct FeatureTransform {
  std::vector<double> mean;
  std::vector<double> stddev;          // 0 for constant dimensions
  std::vector<std::uint8_t> constant;  // 1 -> dimension maps to zero

  std::size_t dims() const { return mean.size(); }
  std::vector<double> apply(const std::vector<double>& row) const;
};

struct NormalizedFeatures {
  FeatureTransform transform;
  std::vector<std::vector<double>> rows;  // the standardized training matrix
};

// Needs at least two rows of equal length; validation and test rows must be
// pushed through the returned transform rather than re-fitted.
NormalizedFeatures normalize_features(
    const std::vector<std::vector<double>>& train_rows);

// alpha * seg + beta * rad elementwise; the shorter vector is zero-padded to
// the longer one's length, so the result has the longer length.
std::vector<double> fuse_features(const std::vector<double>& seg,
                                  const std::vector<double>& rad,
                                  double alpha = 0.5, double beta = 0.5);

struct ClassifierConfig {
  int hidden = 32;
  int epochs = 200;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  std::size_t min_rows = 10;
};

// Two dense layers (relu in between) from a fused feature row to three
// presence logits. The output layer starts near zero so an untrained head
// emits probabilities close to 0.5.
class ClassifierHead {
 public:
  ClassifierHead(std::int64_t input_dims, int hidden, std::uint64_t seed);

  Tensor forward(const Tensor& rows) const;  // (N, F) -> (N, 3) logits
  // Sigmoid probabilities for one feature row, gradients off.
  std::array<double, 3> predict_row(const std::vector<double>& row) const;

  std::int64_t input_dims() const { return input_dims_; }
  int hidden() const { return hidden_; }
  // Named "fc1.weight" etc. so the head round-trips through param archives.
  const std::vector<NamedParam>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;

 private:
  std::int64_t input_dims_ = 0;
  int hidden_ = 0;
  Tensor w1_, b1_, w2_, b2_;
  std::vector<NamedParam> params_;
};

// Presence-versus-truth confusion of one output column over a set of cases.
// A column whose training labels are single-class cannot be learned; it is
// flagged degenerate, masked out of the loss, and skipped by the averages.
struct RegionReport {
  RegionId region = RegionId::WholeTumor;
  bool degenerate = false;
  ConfusionCounts counts;
  ClassificationMetrics metrics;
};

struct ClassifierResult {
  ClassifierHead head;
  std::array<RegionReport, 3> regions;  // kClassifierOutputs order
  ClassificationMetrics averaged;       // over non-degenerate regions
  int regions_counted = 0;
  double final_loss = 0.0;
};

// Confusion counts and metrics of `head` against label triples, one row per
// case. Thresholds the sigmoid at 0.5 (logit sign).
std::array<RegionReport, 3> evaluate_classifier(
    const ClassifierHead& head, const std::vector<std::vector<double>>& rows,
    const std::vector<std::array<std::uint8_t, 3>>& labels);

// Full-batch Adam on the binary cross-entropy of the active output columns.
// Deterministic for a fixed config. Rows are expected standardized/fused;
// fewer than `min_rows` rows is refused as InsufficientData.
ClassifierResult train_classifier(
    const std::vector<std::vector<double>>& rows,
    const std::vector<std::array<std::uint8_t, 3>>& labels,
    const ClassifierConfig& config = {});

// Report shaped like the published presence-classification tables: the four
// metrics per region plus their average, with the BraTS2019 reference
// accuracy kept alongside for context.
nlohmann::json classification_report(const ClassifierResult& result);
void write_classification_report(const std::filesystem::path& path,
                                 const ClassifierResult& result);

// One row per id: "id,f0,f1,...". Ids and rows must line up and rows must
// share one length.
void write_feature_csv(const std::filesystem::path& path,
                       const std::vector<std::string>& ids,
                       const std::vector<std::vector<double>>& rows);

}  // namespace refrm3d
