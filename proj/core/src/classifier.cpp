#include "refrm3d/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <utility>

#include "refrm3d/errors.hpp"
#include "refrm3d/losses.hpp"
#include "refrm3d/optim.hpp"
#include "refrm3d/rng.hpp"
#include "refrm3d/train.hpp"

namespace refrm3d {

namespace {

// Below this the training column is treated as constant and mapped to zero;
// anything larger is a real spread worth standardizing.
constexpr double kConstantStd = 1e-12;

// Keeps initial logits within a few hundredths so an untrained head sits
// near probability 0.5 regardless of the feature count.
constexpr double kOutputInitStd = 1e-2;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

SegFeatureVector pool_seg_features(const std::vector<Tensor>& head_maps,
                                   const LabelVolume& pred_labels,
                                   RegionId region) {
  if (head_maps.empty()) {
    fail(ErrorCode::ShapeError, "pool_seg_features: no head maps");
  }
  const Dims3 dims = pred_labels.dims;
  std::int64_t total_channels = 0;
  for (const Tensor& map : head_maps) {
    if (!map.defined() || map.shape().size() != 5 || map.shape()[0] != 1) {
      fail(ErrorCode::ShapeError,
           "pool_seg_features: head maps must be (1, C, D, H, W)");
    }
    if (map.shape()[2] != dims.d || map.shape()[3] != dims.h ||
        map.shape()[4] != dims.w) {
      fail(ErrorCode::ShapeError,
           "pool_seg_features: head map grid does not match the labels");
    }
    total_channels += map.shape()[1];
  }

  SegFeatureVector out;
  out.values.assign(static_cast<std::size_t>(2 * total_channels), 0.0);

  std::vector<std::int64_t> voxels;
  for (std::size_t i = 0; i < pred_labels.labels.size(); ++i) {
    if (region_contains(region, pred_labels.labels[i])) {
      voxels.push_back(static_cast<std::int64_t>(i));
    }
  }
  if (voxels.empty()) {
    out.empty_region = true;
    return out;
  }

  std::size_t base = 0;
  const std::int64_t grid = dims.d * dims.h * dims.w;
  for (const Tensor& map : head_maps) {
    const std::int64_t channels = map.shape()[1];
    const double* data = map.values().data();
    for (std::int64_t c = 0; c < channels; ++c) {
      const double* plane = data + c * grid;
      double sum = 0.0;
      double peak = -std::numeric_limits<double>::infinity();
      for (const std::int64_t idx : voxels) {
        sum += plane[idx];
        peak = std::max(peak, plane[idx]);
      }
      out.values[base + static_cast<std::size_t>(c)] =
          sum / static_cast<double>(voxels.size());
      out.values[base + static_cast<std::size_t>(channels + c)] = peak;
    }
    base += static_cast<std::size_t>(2 * channels);
  }
  return out;
}

SegFeatureVector extract_seg_features(const SegmentationNetwork& network,
                                      const MultiChannelVolume& image,
                                      const LabelVolume& pred_labels,
                                      RegionId region) {
  const Dims3& image_dims = image.dims();
  if (image_dims.d != pred_labels.dims.d || image_dims.h != pred_labels.dims.h ||
      image_dims.w != pred_labels.dims.w) {
    fail(ErrorCode::ShapeError,
         "extract_seg_features: image and prediction grids differ");
  }
  NoGradGuard guard;
  const NetworkOutputs outputs = network.forward_all(input_tensor(image));
  return pool_seg_features(outputs.head_maps, pred_labels, region);
}

std::vector<double> radiomics_feature_row(const RadiomicsFeatures& features) {
  return {features.mesh_volume, features.voxel_volume, features.surface_area,
          features.sphericity};
}

std::vector<double> FeatureTransform::apply(
    const std::vector<double>& row) const {
  if (row.size() != mean.size()) {
    fail(ErrorCode::ShapeError,
         "FeatureTransform: row length does not match the fitted transform");
  }
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = constant[i] ? 0.0 : (row[i] - mean[i]) / stddev[i];
  }
  return out;
}

NormalizedFeatures normalize_features(
    const std::vector<std::vector<double>>& train_rows) {
  if (train_rows.size() < 2) {
    fail(ErrorCode::InsufficientData,
         "normalize_features: need at least 2 training rows");
  }
  const std::size_t dims = train_rows.front().size();
  for (const std::vector<double>& row : train_rows) {
    if (row.size() != dims) {
      fail(ErrorCode::ShapeError, "normalize_features: ragged feature matrix");
    }
  }

  NormalizedFeatures out;
  FeatureTransform& transform = out.transform;
  transform.mean.assign(dims, 0.0);
  transform.stddev.assign(dims, 0.0);
  transform.constant.assign(dims, 0);

  const double n = static_cast<double>(train_rows.size());
  for (const std::vector<double>& row : train_rows) {
    for (std::size_t i = 0; i < dims; ++i) transform.mean[i] += row[i];
  }
  for (std::size_t i = 0; i < dims; ++i) transform.mean[i] /= n;
  for (const std::vector<double>& row : train_rows) {
    for (std::size_t i = 0; i < dims; ++i) {
      const double d = row[i] - transform.mean[i];
      transform.stddev[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < dims; ++i) {
    transform.stddev[i] = std::sqrt(transform.stddev[i] / n);
    if (transform.stddev[i] < kConstantStd) {
      transform.stddev[i] = 0.0;
      transform.constant[i] = 1;
    }
  }

  out.rows.reserve(train_rows.size());
  for (const std::vector<double>& row : train_rows) {
    out.rows.push_back(transform.apply(row));
  }
  return out;
}

std::vector<double> fuse_features(const std::vector<double>& seg,
                                  const std::vector<double>& rad, double alpha,
                                  double beta) {
  std::vector<double> out(std::max(seg.size(), rad.size()), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = i < seg.size() ? seg[i] : 0.0;
    const double r = i < rad.size() ? rad[i] : 0.0;
    out[i] = alpha * s + beta * r;
  }
  return out;
}

ClassifierHead::ClassifierHead(std::int64_t input_dims, int hidden,
                               std::uint64_t seed)
    : input_dims_(input_dims), hidden_(hidden) {
  if (input_dims <= 0 || hidden <= 0) {
    fail(ErrorCode::ConfigError,
         "ClassifierHead: input and hidden widths must be positive");
  }
  Rng rng(seed);
  auto init = [&rng](std::int64_t rows, std::int64_t cols, double stddev) {
    std::vector<double> values(static_cast<std::size_t>(rows * cols));
    for (double& v : values) v = rng.normal(0.0, stddev);
    return Tensor::from_values({rows, cols}, std::move(values), true);
  };
  w1_ = init(hidden, input_dims,
             std::sqrt(2.0 / static_cast<double>(input_dims)));
  b1_ = Tensor::zeros({hidden}, true);
  w2_ = init(3, hidden, kOutputInitStd);
  b2_ = Tensor::zeros({3}, true);
  params_ = {{"fc1.weight", w1_},
             {"fc1.bias", b1_},
             {"fc2.weight", w2_},
             {"fc2.bias", b2_}};
}

Tensor ClassifierHead::forward(const Tensor& rows) const {
  return linear(relu(linear(rows, w1_, b1_)), w2_, b2_);
}

std::array<double, 3> ClassifierHead::predict_row(
    const std::vector<double>& row) const {
  if (static_cast<std::int64_t>(row.size()) != input_dims_) {
    fail(ErrorCode::ShapeError,
         "ClassifierHead: row length does not match the head's input width");
  }
  NoGradGuard guard;
  const Tensor logits = forward(Tensor::from_values({1, input_dims_}, row));
  return {sigmoid(logits.values()[0]), sigmoid(logits.values()[1]),
          sigmoid(logits.values()[2])};
}

std::vector<Tensor> ClassifierHead::parameter_tensors() const {
  std::vector<Tensor> tensors;
  tensors.reserve(params_.size());
  for (const NamedParam& param : params_) tensors.push_back(param.tensor);
  return tensors;
}

namespace {

// Flattens equal-length feature rows into one (N, F) constant tensor.
Tensor batch_tensor(const std::vector<std::vector<double>>& rows) {
  const std::size_t dims = rows.front().size();
  if (dims == 0) {
    fail(ErrorCode::ShapeError, "classifier rows need at least one feature");
  }
  std::vector<double> flat;
  flat.reserve(rows.size() * dims);
  for (const std::vector<double>& row : rows) {
    if (row.size() != dims) {
      fail(ErrorCode::ShapeError, "classifier feature matrix is ragged");
    }
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor::from_values(
      {static_cast<std::int64_t>(rows.size()), static_cast<std::int64_t>(dims)},
      std::move(flat));
}

}  // namespace

std::array<RegionReport, 3> evaluate_classifier(
    const ClassifierHead& head, const std::vector<std::vector<double>>& rows,
    const std::vector<std::array<std::uint8_t, 3>>& labels) {
  if (rows.empty() || rows.size() != labels.size()) {
    fail(ErrorCode::ShapeError,
         "evaluate_classifier: need one label triple per feature row");
  }
  NoGradGuard guard;
  const Tensor logits = head.forward(batch_tensor(rows));

  std::array<RegionReport, 3> reports;
  for (std::size_t j = 0; j < 3; ++j) {
    RegionReport& report = reports[j];
    report.region = kClassifierOutputs[j];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const bool predicted = logits.values()[i * 3 + j] > 0.0;
      const bool actual = labels[i][j] != 0;
      if (predicted && actual) ++report.counts.tp;
      if (predicted && !actual) ++report.counts.fp;
      if (!predicted && !actual) ++report.counts.tn;
      if (!predicted && actual) ++report.counts.fn;
    }
    report.metrics = classification_metrics(report.counts);
  }
  return reports;
}

ClassifierResult train_classifier(
    const std::vector<std::vector<double>>& rows,
    const std::vector<std::array<std::uint8_t, 3>>& labels,
    const ClassifierConfig& config) {
  if (config.epochs < 0 || config.learning_rate <= 0.0 || config.hidden <= 0) {
    fail(ErrorCode::ConfigError,
         "train_classifier: epochs must be >= 0 and learning rate and hidden "
         "width positive");
  }
  if (config.epochs > 0 && !grad_enabled()) {
    // Without recording, backward() is a no-op and the head would come back
    // untrained; refuse instead of optimising nothing.
    fail(ErrorCode::ConfigError,
         "train_classifier: gradient recording is disabled (NoGradGuard "
         "active)");
  }
  if (rows.size() != labels.size()) {
    fail(ErrorCode::ShapeError,
         "train_classifier: need one label triple per feature row");
  }
  if (rows.empty() || rows.size() < config.min_rows) {
    fail(ErrorCode::InsufficientData,
         "train_classifier: got " + std::to_string(rows.size()) +
             " rows but the configuration requires at least " +
             std::to_string(std::max<std::size_t>(config.min_rows, 1)));
  }

  const Tensor batch = batch_tensor(rows);
  const std::int64_t feature_dims = batch.shape()[1];

  // A single-class column cannot be fit; mask it out of the loss instead of
  // letting it drag every logit toward one side.
  std::vector<bool> active(3, false);
  std::array<bool, 3> degenerate = {false, false, false};
  for (std::size_t j = 0; j < 3; ++j) {
    bool any_on = false, any_off = false;
    for (const std::array<std::uint8_t, 3>& triple : labels) {
      (triple[j] != 0 ? any_on : any_off) = true;
    }
    active[j] = any_on && any_off;
    degenerate[j] = !active[j];
  }
  const bool any_active =
      std::any_of(active.begin(), active.end(), [](bool a) { return a; });

  ClassifierHead head(feature_dims, config.hidden, config.seed);
  double final_loss = 0.0;
  if (any_active && config.epochs > 0) {
    std::vector<double> targets(rows.size() * 3);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        targets[i * 3 + j] = labels[i][j] != 0 ? 1.0 : 0.0;
      }
    }
    Adam adam(head.parameter_tensors(), {.lr = config.learning_rate});
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      adam.zero_grad();
      const Tensor loss = sigmoid_bce_loss(head.forward(batch), targets, active);
      final_loss = loss.item();
      if (!std::isfinite(final_loss)) {
        fail(ErrorCode::DivergenceError,
             "train_classifier: loss became non-finite at epoch " +
                 std::to_string(epoch + 1));
      }
      backward(loss);
      adam.step();
    }
  }

  const std::array<RegionReport, 3> reports =
      evaluate_classifier(head, rows, labels);
  ClassifierResult result{std::move(head), reports, {}, 0, final_loss};
  for (std::size_t j = 0; j < 3; ++j) {
    result.regions[j].degenerate = degenerate[j];
    if (degenerate[j]) continue;
    result.averaged.accuracy += result.regions[j].metrics.accuracy;
    result.averaged.precision += result.regions[j].metrics.precision;
    result.averaged.sensitivity += result.regions[j].metrics.sensitivity;
    result.averaged.specificity += result.regions[j].metrics.specificity;
    result.averaged.division_by_zero |=
        result.regions[j].metrics.division_by_zero;
    ++result.regions_counted;
  }
  if (result.regions_counted > 0) {
    const double n = result.regions_counted;
    result.averaged.accuracy /= n;
    result.averaged.precision /= n;
    result.averaged.sensitivity /= n;
    result.averaged.specificity /= n;
  }
  return result;
}

nlohmann::json classification_report(const ClassifierResult& result) {
  nlohmann::json regions = nlohmann::json::object();
  for (const RegionReport& report : result.regions) {
    regions[region_name(report.region)] = {
        {"accuracy", report.metrics.accuracy},
        {"precision", report.metrics.precision},
        {"sensitivity", report.metrics.sensitivity},
        {"specificity", report.metrics.specificity},
        {"degenerate", report.degenerate},
        {"counts",
         {{"tp", report.counts.tp},
          {"fp", report.counts.fp},
          {"tn", report.counts.tn},
          {"fn", report.counts.fn}}},
    };
  }
  return nlohmann::json{
      {"regions", regions},
      {"averaged",
       {{"accuracy", result.averaged.accuracy},
        {"precision", result.averaged.precision},
        {"sensitivity", result.averaged.sensitivity},
        {"specificity", result.averaged.specificity},
        {"regions_counted", result.regions_counted}}},
      {"final_loss", result.final_loss},
      // Published presence-classification accuracy on BraTS2019, kept in every
      // report as the bar the averaged column is compared against.
      {"reference", {{"dataset", "BraTS2019"}, {"averaged_accuracy", 0.9927}}},
  };
}

void write_classification_report(const std::filesystem::path& path,
                                 const ClassifierResult& result) {
  std::ofstream out(path);
  if (!out) {
    fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  }
  out << classification_report(result).dump(2) << '\n';
  if (!out) {
    fail(ErrorCode::IoError, "failed writing '" + path.string() + "'");
  }
}

void write_feature_csv(const std::filesystem::path& path,
                       const std::vector<std::string>& ids,
                       const std::vector<std::vector<double>>& rows) {
  if (ids.size() != rows.size()) {
    fail(ErrorCode::ShapeError, "write_feature_csv: one id per feature row");
  }
  const std::size_t dims = rows.empty() ? 0 : rows.front().size();
  std::ofstream out(path);
  if (!out) {
    fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  }
  out << "id";
  for (std::size_t i = 0; i < dims; ++i) out << ",f" << i;
  out << '\n';
  char buffer[32];
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != dims) {
      fail(ErrorCode::ShapeError, "write_feature_csv: ragged feature matrix");
    }
    out << ids[r];
    for (const double v : rows[r]) {
      std::snprintf(buffer, sizeof buffer, ",%.9g", v);
      out << buffer;
    }
    out << '\n';
  }
  if (!out) {
    fail(ErrorCode::IoError, "failed writing '" + path.string() + "'");
  }
}

}  // namespace refrm3d
