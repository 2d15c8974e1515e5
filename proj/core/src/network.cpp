#include "refrm3d/network.hpp"

#include <cmath>
#include <sstream>

namespace refrm3d {

const char* network_variant_name(NetworkVariant variant) {
  switch (variant) {
    case NetworkVariant::Base: return "base";
    case NetworkVariant::Fmff: return "fmff";
    case NetworkVariant::FmffHusr: return "fmff-husr";
    case NetworkVariant::Full: return "full";
  }
  return "?";
}

NetworkVariant network_variant_from_name(const std::string& name) {
  if (name == "base") return NetworkVariant::Base;
  if (name == "fmff") return NetworkVariant::Fmff;
  if (name == "fmff-husr") return NetworkVariant::FmffHusr;
  if (name == "full") return NetworkVariant::Full;
  fail(ErrorCode::ConfigError, "unknown network variant '" + name + "'");
}

NetworkConfig apply_variant(NetworkConfig config, NetworkVariant variant) {
  config.fmff = variant != NetworkVariant::Base;
  config.husr =
      variant == NetworkVariant::FmffHusr || variant == NetworkVariant::Full;
  config.rskip = variant == NetworkVariant::Full;
  config.aggregation = variant == NetworkVariant::Full;
  return config;
}

namespace {

void validate_config(const NetworkConfig& config) {
  if (config.depth < 2 || config.depth > 8) {
    fail(ErrorCode::ConfigError, "network depth must be in [2, 8]");
  }
  if (config.base_filters < 1 || config.in_channels < 1 ||
      config.num_classes < 2) {
    fail(ErrorCode::ConfigError,
         "network channel counts must be positive (>= 2 classes)");
  }
  if (config.dilation_rates.empty()) {
    fail(ErrorCode::ConfigError, "context pathway needs dilation rates");
  }
  for (int r : config.dilation_rates) {
    if (r < 1) fail(ErrorCode::ConfigError, "dilation rates must be >= 1");
  }
  if (config.fusion_stages < 0 || config.fusion_stages > config.depth) {
    fail(ErrorCode::ConfigError,
         "fusion_stages must lie in [0, depth]");
  }
}

int effective_fusion_stages(const NetworkConfig& config) {
  if (config.fusion_stages > 0) return config.fusion_stages;
  return std::min(3, config.depth);
}

}  // namespace

SegmentationNetwork::ConvParams SegmentationNetwork::make_conv(
    const std::string& name, const ConvSpec& spec, Rng& rng, bool zero_init,
    bool transposed) {
  ConvParams conv;
  conv.spec = spec;
  const std::int64_t k3 = static_cast<std::int64_t>(spec.kernel[0]) *
                          spec.kernel[1] * spec.kernel[2];
  std::vector<std::int64_t> wshape =
      transposed ? std::vector<std::int64_t>{spec.in_channels,
                                             spec.out_channels, spec.kernel[0],
                                             spec.kernel[1], spec.kernel[2]}
                 : std::vector<std::int64_t>{spec.out_channels,
                                             spec.in_channels, spec.kernel[0],
                                             spec.kernel[1], spec.kernel[2]};
  conv.w = Tensor::zeros(std::move(wshape), /*requires_grad=*/true);
  if (!zero_init) {
    // He-style uniform fan-in bound, drawn in registration order so one
    // seed fixes every weight.
    const double bound =
        std::sqrt(6.0 / static_cast<double>(spec.in_channels * k3));
    for (auto& v : conv.w.mutable_values()) v = rng.uniform(-bound, bound);
  }
  conv.b = Tensor::zeros({spec.out_channels}, /*requires_grad=*/true);
  conv.w.set_name(name + ".w");
  conv.b.set_name(name + ".b");
  params_.push_back({conv.w.name(), conv.w});
  params_.push_back({conv.b.name(), conv.b});
  return conv;
}

SegmentationNetwork::SegmentationNetwork(const NetworkConfig& config,
                                         std::uint64_t seed)
    : config_(config) {
  validate_config(config_);
  Rng rng(seed);
  const int depth = config_.depth;
  auto stage_channels = [&](int stage) {  // 1-based encoder stage
    return config_.base_filters << (stage - 1);
  };

  for (int stage = 1; stage <= depth; ++stage) {
    const std::int64_t in_ch =
        stage == 1 ? config_.in_channels : stage_channels(stage - 1);
    encoder_.push_back(make_conv(
        "enc" + std::to_string(stage),
        ConvSpec::cubic(in_ch, stage_channels(stage), 3, 1, 1), rng,
        /*zero_init=*/false, /*transposed=*/false));
  }

  const std::int64_t deep_ch = stage_channels(depth);
  for (std::size_t i = 0; i < config_.dilation_rates.size(); ++i) {
    const int rate = config_.dilation_rates[i];
    context_.push_back(make_conv(
        "ctx" + std::to_string(i + 1),
        ConvSpec::cubic(deep_ch, deep_ch, 3, 1, rate, rate), rng,
        /*zero_init=*/false, /*transposed=*/false));
  }

  std::int64_t x_ch = deep_ch;
  for (int stage = depth - 1; stage >= 1; --stage) {
    DecoderStage dec;
    dec.out_channels = stage_channels(stage);
    const std::string base = "dec" + std::to_string(stage);
    dec.up = make_conv(base + ".up",
                       ConvSpec::cubic(x_ch, dec.out_channels, 2, 2, 0), rng,
                       /*zero_init=*/false, /*transposed=*/true);
    if (config_.husr) {
      dec.husr_proj = make_conv(
          base + ".husr_proj", ConvSpec::cubic(x_ch, dec.out_channels, 1),
          rng, /*zero_init=*/false, /*transposed=*/false);
      dec.refine = make_conv(
          base + ".refine",
          ConvSpec::cubic(dec.out_channels, dec.out_channels, 3, 1, 1), rng,
          /*zero_init=*/false, /*transposed=*/false);
    }
    if (config_.rskip) {
      dec.skip_proj = make_conv(
          base + ".skip_proj",
          ConvSpec::cubic(dec.out_channels, dec.out_channels, 1), rng,
          /*zero_init=*/true, /*transposed=*/false);
      dec.merge = make_conv(
          base + ".merge",
          ConvSpec::cubic(dec.out_channels, dec.out_channels, 3, 1, 1), rng,
          /*zero_init=*/false, /*transposed=*/false);
      dec.stage_channels = dec.out_channels;
    } else {
      dec.stage_channels = 2 * dec.out_channels;  // concatenated skip
    }
    x_ch = dec.stage_channels;
    decoder_.push_back(std::move(dec));
  }
  const std::int64_t final_ch = x_ch;

  if (config_.fmff) {
    const int fusion = effective_fusion_stages(config_);
    for (int stage = 1; stage <= fusion; ++stage) {
      fmff_align_.push_back(make_conv(
          "fmff.align" + std::to_string(stage),
          ConvSpec::cubic(stage_channels(stage), final_ch, 1), rng,
          /*zero_init=*/false, /*transposed=*/false));
    }
  }

  if (config_.aggregation) {
    heads_.push_back(make_conv(
        "head.ctx", ConvSpec::cubic(deep_ch, config_.num_classes, 1), rng,
        /*zero_init=*/false, /*transposed=*/false));
    head_scales_.push_back(1 << (depth - 1));
    for (int stage = depth - 1; stage >= 2; --stage) {
      const auto& dec = decoder_[static_cast<std::size_t>(depth - 1 - stage)];
      heads_.push_back(make_conv(
          "head.dec" + std::to_string(stage),
          ConvSpec::cubic(dec.stage_channels, config_.num_classes, 1), rng,
          /*zero_init=*/false, /*transposed=*/false));
      head_scales_.push_back(1 << (stage - 1));
    }
    heads_.push_back(make_conv(
        "head.final", ConvSpec::cubic(final_ch, config_.num_classes, 1), rng,
        /*zero_init=*/false, /*transposed=*/false));
    head_scales_.push_back(1);
    gamma_ = Tensor::full({static_cast<std::int64_t>(heads_.size())},
                          1.0 / static_cast<double>(heads_.size()),
                          /*requires_grad=*/true);
    gamma_.set_name("head.gamma");
    params_.push_back({gamma_.name(), gamma_});
  } else {
    heads_.push_back(make_conv(
        "head.final", ConvSpec::cubic(final_ch, config_.num_classes, 1), rng,
        /*zero_init=*/false, /*transposed=*/false));
    head_scales_.push_back(1);
  }
}

NetworkOutputs SegmentationNetwork::forward_all(const Tensor& input) const {
  if (!input.defined() || input.shape().size() != 5 ||
      input.shape()[1] != config_.in_channels) {
    fail(ErrorCode::ShapeError,
         "network input must be (B, " + std::to_string(config_.in_channels) +
             ", D, H, W)");
  }
  const std::int64_t divisor = 1LL << (config_.depth - 1);
  for (int axis = 2; axis < 5; ++axis) {
    if (input.shape()[axis] % divisor != 0 || input.shape()[axis] < divisor) {
      fail(ErrorCode::ShapeError,
           "network input spatial extents must be positive multiples of " +
               std::to_string(divisor));
    }
  }

  std::vector<Tensor> enc_maps;
  Tensor cur = input;
  for (std::size_t stage = 0; stage < encoder_.size(); ++stage) {
    if (stage > 0) cur = maxpool3d(cur, 2, 2);
    const auto& conv = encoder_[stage];
    cur = relu(conv3d(cur, conv.w, conv.b, conv.spec));
    enc_maps.push_back(cur);
  }

  Tensor x = enc_maps.back();
  for (const auto& ctx : context_) {
    x = relu(conv3d(x, ctx.w, ctx.b, ctx.spec));
  }
  const Tensor context_map = x;

  std::vector<Tensor> stage_maps;
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const auto& dec = decoder_[i];
    const Tensor& skip = enc_maps[decoder_.size() - 1 - i];
    Tensor up = transposed_conv3d(x, dec.up.w, dec.up.b, dec.up.spec);
    Tensor h;
    if (config_.husr) {
      Tensor projected = conv3d(upsample_trilinear3d(x, 2), dec.husr_proj.w,
                                dec.husr_proj.b, dec.husr_proj.spec);
      Tensor hybrid = scale(add(up, projected), 0.5);
      h = relu(conv3d(hybrid, dec.refine.w, dec.refine.b, dec.refine.spec));
    } else {
      h = relu(up);
    }
    if (config_.rskip) {
      Tensor projected_skip =
          conv3d(skip, dec.skip_proj.w, dec.skip_proj.b, dec.skip_proj.spec);
      x = relu(conv3d(add(h, projected_skip), dec.merge.w, dec.merge.b,
                      dec.merge.spec));
    } else {
      const Tensor parts[] = {h, skip};
      x = concat_channel(parts);
    }
    stage_maps.push_back(x);
  }

  Tensor final_map = x;
  if (config_.fmff) {
    Tensor fused;
    for (std::size_t s = 0; s < fmff_align_.size(); ++s) {
      const auto& align = fmff_align_[s];
      Tensor aligned =
          conv3d(enc_maps[s], align.w, align.b, align.spec);
      if (s > 0) aligned = upsample_trilinear3d(aligned, 1 << s);
      fused = s == 0 ? aligned : add(fused, aligned);
    }
    final_map = add(final_map, fused);
  }

  NetworkOutputs out;
  if (config_.aggregation) {
    std::vector<Tensor> taps;
    taps.push_back(context_map);
    for (std::size_t i = 0; i + 1 < stage_maps.size(); ++i) {
      taps.push_back(stage_maps[i]);
    }
    taps.push_back(final_map);
    for (std::size_t i = 0; i < heads_.size(); ++i) {
      Tensor m = conv3d(taps[i], heads_[i].w, heads_[i].b, heads_[i].spec);
      if (head_scales_[i] > 1) m = upsample_trilinear3d(m, head_scales_[i]);
      out.head_maps.push_back(m);
    }
    out.logits = weighted_sum(out.head_maps, gamma_);
  } else {
    out.head_maps.push_back(conv3d(final_map, heads_[0].w, heads_[0].b,
                                   heads_[0].spec));
    out.logits = out.head_maps[0];
  }
  return out;
}

Tensor SegmentationNetwork::forward(const Tensor& input) const {
  return forward_all(input).logits;
}

std::vector<Tensor> SegmentationNetwork::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

std::int64_t SegmentationNetwork::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& p : params_) total += p.tensor.numel();
  return total;
}

std::string SegmentationNetwork::describe() const {
  std::ostringstream os;
  os << "encoder/decoder depth " << config_.depth << ", base filters "
     << config_.base_filters << ", " << config_.in_channels
     << " input channels, " << config_.num_classes << " classes\n";
  os << "context pathway dilation rates:";
  for (int r : config_.dilation_rates) os << ' ' << r;
  os << '\n';
  os << "fmff " << (config_.fmff ? "on" : "off");
  if (config_.fmff) {
    os << " (stages 1.." << effective_fusion_stages(config_) << ")";
  }
  os << ", husr " << (config_.husr ? "on" : "off") << ", rskip "
     << (config_.rskip ? "on" : "off") << ", aggregation "
     << (config_.aggregation ? "on (" + std::to_string(heads_.size()) +
                                   " heads)"
                             : "off");
  os << "\nparameters: " << parameter_count() << '\n';
  for (const auto& p : params_) {
    os << "  " << p.name << " (";
    const auto& shape = p.tensor.shape();
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << 'x';
      os << shape[i];
    }
    os << ")\n";
  }
  return os.str();
}

}  // namespace refrm3d
