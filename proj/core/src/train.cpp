#include "refrm3d/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "refrm3d/errors.hpp"
#include "refrm3d/optim.hpp"
#include "refrm3d/rng.hpp"

namespace refrm3d {
namespace {

void validate_train_config(const TrainConfig& config) {
  if (config.epochs < 1) {
    fail(ErrorCode::ConfigError, "training needs at least one epoch");
  }
  if (config.max_steps_per_epoch < 0) {
    fail(ErrorCode::ConfigError, "max_steps_per_epoch must be >= 0");
  }
  if (config.val_fraction < 0.0 || config.val_fraction >= 1.0) {
    fail(ErrorCode::ConfigError, "val_fraction must lie in [0, 1)");
  }
  if (!(config.learning_rate > 0.0)) {
    fail(ErrorCode::ConfigError, "learning_rate must be positive");
  }
}

void validate_case(const TrainCase& item, std::int64_t in_channels) {
  item.image.validate();
  item.labels.validate();
  if (item.image.dims() != item.labels.dims) {
    fail(ErrorCode::ShapeError, "case '" + item.id +
                                    "': image grid " +
                                    dims_to_string(item.image.dims()) +
                                    " does not match label grid " +
                                    dims_to_string(item.labels.dims));
  }
  if (item.image.channel_count() != in_channels) {
    fail(ErrorCode::ShapeError,
         "case '" + item.id + "' has " +
             std::to_string(item.image.channel_count()) +
             " channels but the network expects " +
             std::to_string(in_channels));
  }
}

struct CaseLoss {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Forward pass plus both loss terms for one case. The returned tensor is the
// combined loss node; callers that only want numbers run it under NoGradGuard.
Tensor case_loss(const SegmentationNetwork& network, const Tensor& input,
                 const Tensor& target, const ClassWeights& weights,
                 LossCombine combine, CaseLoss& out) {
  const Tensor probs = softmax_channel(network.forward(input));
  const Tensor dice = dice_loss(probs, target, weights.dice);
  const Tensor focal = focal_loss(probs, target, weights.focal_alpha);
  const Tensor loss = combine_losses(dice, focal, combine);
  out.loss = loss.item();
  out.accuracy = dice_accuracy(probs, target);
  return loss;
}

}  // namespace

Tensor input_tensor(const MultiChannelVolume& image) {
  image.validate();
  const Dims3 dims = image.dims();
  const std::int64_t channels = image.channel_count();
  Tensor input = Tensor::zeros({1, channels, dims.d, dims.h, dims.w});
  auto& values = input.mutable_values();
  const auto plane = static_cast<std::size_t>(dims.voxels());
  for (std::int64_t c = 0; c < channels; ++c) {
    const auto& data = image.channels[static_cast<std::size_t>(c)].data;
    for (std::size_t i = 0; i < plane; ++i) {
      values[static_cast<std::size_t>(c) * plane + i] =
          static_cast<double>(data[i]);
    }
  }
  return input;
}

TrainResult train_network(SegmentationNetwork& network,
                          const std::vector<TrainCase>& cases,
                          const TrainConfig& config) {
  validate_train_config(config);
  if (!grad_enabled()) {
    // Without recording, backward() is a no-op and every epoch would leave
    // the parameters untouched; refuse instead of training silently.
    fail(ErrorCode::ConfigError,
         "train_network: gradient recording is disabled (NoGradGuard active)");
  }
  if (cases.empty()) {
    fail(ErrorCode::EmptyDataset, "no training cases supplied");
  }
  for (const TrainCase& item : cases) {
    validate_case(item, network.config().in_channels);
  }

  // One generator drives the split and every epoch shuffle, so a seed pins
  // the full case ordering of the run.
  Rng rng(config.seed);
  std::vector<std::size_t> order(cases.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  auto val_count = static_cast<std::size_t>(
      config.val_fraction * static_cast<double>(cases.size()));
  val_count = std::min(val_count, cases.size() - 1);  // keep one train case
  std::vector<std::size_t> val_order(order.begin(),
                                     order.begin() + static_cast<std::ptrdiff_t>(val_count));
  std::vector<std::size_t> train_order(
      order.begin() + static_cast<std::ptrdiff_t>(val_count), order.end());

  TrainResult result;
  for (std::size_t idx : train_order) result.train_case_ids.push_back(cases[idx].id);
  for (std::size_t idx : val_order) result.val_case_ids.push_back(cases[idx].id);

  std::array<std::int64_t, kNumClasses> counts = {0, 0, 0, 0};
  for (std::size_t idx : train_order) {
    accumulate_label_counts(cases[idx].labels, counts);
  }
  result.class_weights = class_weights_from_counts(counts);

  // Inputs and one-hot targets are constant across epochs; build them once.
  std::vector<Tensor> inputs(cases.size());
  std::vector<Tensor> targets(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    inputs[i] = input_tensor(cases[i].image);
    targets[i] = one_hot(cases[i].labels);
  }

  AdamConfig adam_config;
  adam_config.lr = config.learning_rate;
  Adam optimizer(network.parameter_tensors(), adam_config);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    rng.shuffle(train_order);

    std::size_t steps = train_order.size();
    if (config.max_steps_per_epoch > 0) {
      steps = std::min(steps,
                       static_cast<std::size_t>(config.max_steps_per_epoch));
    }

    double train_loss = 0.0;
    double train_acc = 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
      const std::size_t idx = train_order[i];
      optimizer.zero_grad();
      CaseLoss stats;
      const Tensor loss =
          case_loss(network, inputs[idx], targets[idx],
                    result.class_weights, config.combine, stats);
      if (!std::isfinite(stats.loss)) {
        fail(ErrorCode::DivergenceError,
             "non-finite training loss on case '" + cases[idx].id +
                 "' in epoch " + std::to_string(epoch));
      }
      backward(loss);
      optimizer.step();
      train_loss += stats.loss;
      train_acc += stats.accuracy;
    }
    train_loss /= static_cast<double>(steps);
    train_acc /= static_cast<double>(steps);

    double val_loss = train_loss;
    double val_acc = train_acc;
    if (!val_order.empty()) {
      NoGradGuard guard;
      val_loss = 0.0;
      val_acc = 0.0;
      for (std::size_t idx : val_order) {
        CaseLoss stats;
        case_loss(network, inputs[idx], targets[idx], result.class_weights,
                  config.combine, stats);
        if (!std::isfinite(stats.loss)) {
          fail(ErrorCode::DivergenceError,
               "non-finite validation loss on case '" + cases[idx].id +
                   "' in epoch " + std::to_string(epoch));
        }
        val_loss += stats.loss;
        val_acc += stats.accuracy;
      }
      val_loss /= static_cast<double>(val_order.size());
      val_acc /= static_cast<double>(val_order.size());
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_loss;
    stats.train_acc = train_acc;
    stats.val_loss = val_loss;
    stats.val_acc = val_acc;
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    result.epochs.push_back(stats);

    // Strict improvement only, so ties keep the earliest epoch.
    if (epoch == 1 || val_loss < result.best_val_loss) {
      result.best_epoch = epoch;
      result.best_val_loss = val_loss;
      nlohmann::json meta;
      meta["epoch"] = epoch;
      meta["seed"] = config.seed;
      meta["val_loss"] = val_loss;
      result.best_checkpoint = archive_from_params(network.parameters(), meta);
    }
  }

  return result;
}

void write_epoch_csv(const std::filesystem::path& path,
                     const std::vector<EpochStats>& epochs) {
  std::ofstream out(path);
  if (!out) {
    fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  }
  out << "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n";
  char line[192];
  for (const EpochStats& e : epochs) {
    std::snprintf(line, sizeof line, "%d,%.6f,%.6f,%.6f,%.6f,%.3f\n", e.epoch,
                  e.train_loss, e.train_acc, e.val_loss, e.val_acc, e.seconds);
    out << line;
  }
  if (!out) {
    fail(ErrorCode::IoError, "failed writing '" + path.string() + "'");
  }
}

}  // namespace refrm3d
