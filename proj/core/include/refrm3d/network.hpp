#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "refrm3d/rng.hpp"
#include "refrm3d/tensor.hpp"

namespace refrm3d {

// 3-D encoder/decoder segmentation network.
//
// The encoder doubles its filters per stage (conv3+relu, then 2x maxpool
// entering the next stage). The deepest feature map always runs through a
// sequential dilated-convolution context pathway. Three optional refinements
// stack on top of that trunk:
//   - fmff:  1x1x1-aligned encoder maps from the first `fusion_stages`
//            stages are upsampled to full resolution, summed, and added to
//            the final decoder map.
//   - husr:  decoder upsampling becomes the mean of a transposed conv and a
//            1x1x1-projected trilinear upsample, followed by a 3x3x3
//            refinement conv.
//   - rskip: the encoder skip joins through a zero-initialised 1x1x1
//            projection added to the upsampled features and merged by a
//            3x3x3 conv; when off, the skip is concatenated instead and the
//            doubled channel count flows onward.
//   - aggregation: one 1x1x1 class head per resolution level (context
//            pathway, every intermediate decoder stage, final map), each
//            upsampled to full resolution and blended with learnable
//            weights; when off, only the final map grows a head.
struct NetworkConfig {
  int depth = 3;                  // encoder stages; must be >= 2
  std::int64_t base_filters = 8;  // channels of the first stage
  std::int64_t in_channels = 3;
  std::int64_t num_classes = 4;
  std::vector<int> dilation_rates = {1, 2, 4};
  int fusion_stages = 0;  // 0 -> min(3, depth) when fmff is enabled
  bool fmff = false;
  bool husr = false;
  bool rskip = false;
  bool aggregation = false;
};

enum class NetworkVariant { Base, Fmff, FmffHusr, Full };
const char* network_variant_name(NetworkVariant variant);
NetworkVariant network_variant_from_name(const std::string& name);
// Applies the ablation toggles of `variant` on top of `config`.
NetworkConfig apply_variant(NetworkConfig config, NetworkVariant variant);

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct NetworkOutputs {
  Tensor logits;  // (B, num_classes, D, H, W)
  // Class-logit maps at full resolution: one per resolution level with
  // aggregation enabled, otherwise just the final-map head. Downstream
  // feature extraction pools these.
  std::vector<Tensor> head_maps;
};

class SegmentationNetwork {
 public:
  SegmentationNetwork(const NetworkConfig& config, std::uint64_t seed);

  NetworkOutputs forward_all(const Tensor& input) const;
  Tensor forward(const Tensor& input) const;  // logits only

  const NetworkConfig& config() const { return config_; }
  const std::vector<NamedParam>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  std::int64_t parameter_count() const;
  std::string describe() const;

 private:
  struct ConvParams {
    Tensor w;
    Tensor b;
    ConvSpec spec;
  };
  struct DecoderStage {
    ConvParams up;         // transposed conv, 2x
    ConvParams husr_proj;  // 1^3 projection of the trilinear branch
    ConvParams refine;     // 3^3 conv after the hybrid upsample
    ConvParams skip_proj;  // zero-initialised 1^3 skip projection
    ConvParams merge;      // 3^3 conv over (up + projected skip)
    std::int64_t out_channels = 0;    // channels after upsampling
    std::int64_t stage_channels = 0;  // channels leaving the stage
  };

  ConvParams make_conv(const std::string& name, const ConvSpec& spec,
                       Rng& rng, bool zero_init, bool transposed);

  NetworkConfig config_;
  std::vector<ConvParams> encoder_;       // one per stage
  std::vector<ConvParams> context_;       // one per dilation rate
  std::vector<DecoderStage> decoder_;     // processing order, deep to fine
  std::vector<ConvParams> fmff_align_;    // stages 1..fusion_stages
  std::vector<ConvParams> heads_;
  std::vector<int> head_scales_;
  Tensor gamma_;                          // aggregation blend weights
  std::vector<NamedParam> params_;
};

}  // namespace refrm3d
