#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "refrm3d/losses.hpp"
#include "refrm3d/network.hpp"
#include "refrm3d/param_store.hpp"
#include "refrm3d/volume.hpp"

namespace refrm3d {

// One preprocessed training case held in memory.
struct TrainCase {
  std::string id;
  MultiChannelVolume image;
  LabelVolume labels;
};

struct TrainConfig {
  int epochs = 2;
  int max_steps_per_epoch = 0;  // 0 = every training case each epoch
  double val_fraction = 0.25;
  double learning_rate = 1e-4;
  LossCombine combine = LossCombine::Sum;
  std::uint64_t seed = 0;  // split and epoch shuffling
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;  // 1 - unit-weight dice loss
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;  // wall time, excluded from determinism checks
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::vector<std::string> train_case_ids;
  std::vector<std::string> val_case_ids;
  int best_epoch = 0;            // 1-based, lowest validation loss
  double best_val_loss = 0.0;
  ParamArchive best_checkpoint;  // parameters at the best epoch
  ClassWeights class_weights;    // computed over the training split
};

// (1, C, D, H, W) constant input tensor from a preprocessed image.
Tensor input_tensor(const MultiChannelVolume& image);

// Runs the optimisation loop on `network` in place. Cases are shuffled once
// for the train/validation split and re-shuffled every epoch; with no
// validation cases the validation columns mirror the training averages.
// A non-finite loss raises DivergenceError.
TrainResult train_network(SegmentationNetwork& network,
                          const std::vector<TrainCase>& cases,
                          const TrainConfig& config);

// epoch,train_loss,train_acc,val_loss,val_acc,seconds
void write_epoch_csv(const std::filesystem::path& path,
                     const std::vector<EpochStats>& epochs);

}  // namespace refrm3d
