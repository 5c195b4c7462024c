#pragma once

// Network building blocks: channel attention variants, residual blocks, the
// multi-branch fusion block, the stepwise reconstruction block and the full
// super-resolution network.

#include "mbmfn/config.hpp"
#include "mbmfn/ops.hpp"
#include "mbmfn/params.hpp"

#include <string>
#include <vector>

namespace mbmfn {

/// Added to the spatial variance before the square root in every
/// mean+std channel descriptor.
inline constexpr double kStdEps = 1e-8;

namespace names {
inline std::string block(int i) { return "body." + std::to_string(i); }
inline std::string branch(const std::string& block, int k) { return block + ".branch" + std::to_string(k); }
inline std::string recon_step(const ModelConfig& cfg, int step) {
  return "recon.step" + std::to_string(cfg.recon_weight_sharing ? 0 : step);
}
}  // namespace names

template <typename Scalar>
Var<Scalar> conv(ParamBinding<Scalar>& params, const std::string& prefix, const Var<Scalar>& x) {
  return conv2d(x, params(prefix + ".weight"), params(prefix + ".bias"));
}

/// Channel descriptor mean + std, shape (n, c, 1, 1).
template <typename Scalar>
Var<Scalar> contrast_descriptor(const Var<Scalar>& x) {
  auto stats = channel_stats(x, static_cast<Scalar>(kStdEps));
  return add(stats.mean, stats.std);
}

/// Lightweight enhanced residual channel attention:
/// out = x + x * sigmoid(W (mean + std) + b), W a full c x c 1x1 conv.
template <typename Scalar>
Var<Scalar> lerca_forward(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  const Index c = x.shape().c;
  detail::require(weight.shape() == Shape{c, c, 1, 1} && bias.shape() == Shape{1, c, 1, 1},
                  "lerca: parameters " + weight.shape().str() + "/" + bias.shape().str() + " do not fit " +
                      std::to_string(c) + " channels");
  auto mask = sigmoid(conv2d(contrast_descriptor(x), weight, bias));
  return add(x, channel_scale(x, mask));
}

/// Per-channel gate in (0, 1) for the bottleneck variants (SE/CA/RCA/CCA).
template <typename Scalar>
Var<Scalar> bottleneck_mask(AttentionKind kind, const Var<Scalar>& x, ParamBinding<Scalar>& params,
                            const std::string& prefix) {
  auto desc = kind == AttentionKind::CCA ? contrast_descriptor(x) : channel_mean(x);
  return sigmoid(conv(params, prefix + ".excite", relu(conv(params, prefix + ".squeeze", desc))));
}

template <typename Scalar>
Var<Scalar> attention_forward(AttentionKind kind, const Var<Scalar>& x, ParamBinding<Scalar>& params,
                              const std::string& prefix) {
  switch (kind) {
    case AttentionKind::None:
      return x;
    case AttentionKind::LERCA:
      return lerca_forward(x, params(prefix + ".weight"), params(prefix + ".bias"));
    case AttentionKind::SE:
    case AttentionKind::CA:
    case AttentionKind::CCA:
      return channel_scale(x, bottleneck_mask(kind, x, params, prefix));
    case AttentionKind::RCA:
      return add(x, channel_scale(x, bottleneck_mask(kind, x, params, prefix)));
  }
  throw std::invalid_argument("unknown attention kind");
}

template <typename Scalar>
struct ResidualOutput {
  Var<Scalar> pre_skip;  // conv_b(act(conv_a(x)))
  Var<Scalar> out;       // pre_skip + skip
};

/// Two 3x3 convs with a leaky relu between, plus a skip added at the end.
template <typename Scalar>
ResidualOutput<Scalar> residual_block(const Var<Scalar>& x, ParamBinding<Scalar>& params, const std::string& prefix,
                                      const Var<Scalar>& skip, Scalar slope) {
  const Index cd = skip.shape().c;
  detail::require(x.shape().c == cd || x.shape().c == 2 * cd,
                  "residual block " + prefix + ": input has " + std::to_string(x.shape().c) +
                      " channels, expected " + std::to_string(cd) + " or " + std::to_string(2 * cd));
  auto pre = conv(params, prefix + ".conv_b", leaky_relu(conv(params, prefix + ".conv_a", x), slope));
  return {pre, add(pre, skip)};
}

/// Multi-branch feature multiplexing fusion block (C -> C channels).
template <typename Scalar>
Var<Scalar> mbmfb_forward(const Var<Scalar>& x, ParamBinding<Scalar>& params, const std::string& prefix,
                          const ModelConfig& cfg) {
  detail::require(x.shape().c == cfg.trunk_channels,
                  prefix + ": input has " + std::to_string(x.shape().c) + " channels, expected " +
                      std::to_string(cfg.trunk_channels));
  const auto slope = static_cast<Scalar>(cfg.leaky_slope);
  auto distilled = conv(params, prefix + ".distill", x);

  std::vector<Var<Scalar>> fusion;
  Var<Scalar> handoff;
  Var<Scalar> basic;
  for (int k = 1; k <= ModelConfig::kBranchCount; ++k) {
    const std::string b = names::branch(prefix, k);
    auto input = k == 1 ? distilled : concat_channels({handoff, distilled});
    auto res = residual_block(input, params, b, distilled, slope);
    auto attended = attention_forward(cfg.attention, res.out, params, b + ".attn");
    fusion.push_back(attended);
    if (k == 2) basic = res.out;
    switch (cfg.branch_input) {
      case BranchInput::BeforeResidual: handoff = res.pre_skip; break;
      case BranchInput::AfterResidual: handoff = res.out; break;
      case BranchInput::AfterAttention: handoff = attended; break;
    }
  }
  if (cfg.basic_branch) fusion.push_back(basic);

  auto fused = conv(params, prefix + ".fuse", concat_channels<Scalar>(std::span<const Var<Scalar>>(fusion)));
  return add(attention_forward(cfg.attention, fused, params, prefix + ".attn"), x);
}

/// Reconstruction step: nearest upsampling, conv, leaky relu, optional
/// LERCA, conv. Channels are preserved.
template <typename Scalar>
Var<Scalar> ulerca_forward(const Var<Scalar>& x, ParamBinding<Scalar>& params, const std::string& prefix,
                           int step_factor, Scalar slope, bool with_attention = true) {
  detail::require(step_factor >= 2 && step_factor <= 4,
                  "reconstruction step factor must be 2, 3 or 4, got " + std::to_string(step_factor));
  auto h = leaky_relu(conv(params, prefix + ".conv_a", upsample_nearest(x, static_cast<Index>(step_factor))), slope);
  if (with_attention) h = attention_forward(AttentionKind::LERCA, h, params, prefix + ".attn");
  return conv(params, prefix + ".conv_b", h);
}

/// Full network: head conv, chained fusion blocks, reconstruction, tail conv
/// plus a bilinear skip from the input.
template <typename Scalar>
Var<Scalar> mbmfn_forward(const Var<Scalar>& image, ParamBinding<Scalar>& params, const ModelConfig& cfg) {
  const Shape s = image.shape();
  detail::require(s.c == cfg.in_channels, "network input has " + std::to_string(s.c) + " channels, expected " +
                                              std::to_string(cfg.in_channels));
  detail::require(s.h >= 8 && s.w >= 8, "network input must be at least 8x8, got " + s.str());

  auto features = conv(params, "head", image);
  for (int i = 0; i < cfg.num_blocks; ++i) features = mbmfb_forward(features, params, names::block(i), cfg);

  const auto slope = static_cast<Scalar>(cfg.leaky_slope);
  if (cfg.upsampler == Upsampler::SubPixel) {
    features = pixel_shuffle(conv(params, "recon.subpixel", features), static_cast<Index>(cfg.scale));
  } else {
    const auto steps = cfg.recon_steps();
    for (std::size_t j = 0; j < steps.size(); ++j)
      features = ulerca_forward(features, params, names::recon_step(cfg, static_cast<int>(j)), steps[j], slope,
                                cfg.recon_attention);
  }
  return add(conv(params, "tail", features), upsample_bilinear(image, static_cast<Index>(cfg.scale)));
}

/// Untracked forward pass for inference.
template <typename Scalar>
Tensor<Scalar> run_model(const ModelConfig& cfg, const ParamStore<Scalar>& store, const Tensor<Scalar>& input) {
  ParamBinding<Scalar> params(store, nullptr);
  return mbmfn_forward(Var<Scalar>::constant(input), params, cfg).value();
}

}  // namespace mbmfn
