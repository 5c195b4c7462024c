#include "mbmfn/blocks.hpp"
#include "mbmfn/params.hpp"

namespace mbmfn {
namespace {

void add_conv(std::vector<ParamSpec>& out, const std::string& prefix, int c_in, int c_out, int k,
              bool after_activation = false) {
  out.push_back({prefix + ".weight", Shape{c_out, c_in, k, k},
                 after_activation ? ParamInit::KaimingLeaky : ParamInit::KaimingLinear});
  out.push_back({prefix + ".bias", Shape{1, c_out, 1, 1}, ParamInit::Zero});
}

void add_attention(std::vector<ParamSpec>& out, const std::string& prefix, AttentionKind kind, int c) {
  switch (kind) {
    case AttentionKind::None:
      return;
    case AttentionKind::LERCA:
      out.push_back({prefix + ".weight", Shape{c, c, 1, 1}, ParamInit::Zero});
      out.push_back({prefix + ".bias", Shape{1, c, 1, 1}, ParamInit::Zero});
      return;
    case AttentionKind::SE:
    case AttentionKind::CA:
    case AttentionKind::RCA:
    case AttentionKind::CCA: {
      const int r = bottleneck_width(c);
      add_conv(out, prefix + ".squeeze", c, r, 1);
      add_conv(out, prefix + ".excite", r, c, 1, true);
      return;
    }
  }
}

}  // namespace

std::vector<ParamSpec> param_layout(const ModelConfig& cfg) {
  cfg.validate();
  const int C = cfg.trunk_channels;
  const int Cd = cfg.distill_channels;
  std::vector<ParamSpec> out;

  add_conv(out, "head", cfg.in_channels, C, 3);
  for (int i = 0; i < cfg.num_blocks; ++i) {
    const std::string p = names::block(i);
    add_conv(out, p + ".distill", C, Cd, 1);
    for (int k = 1; k <= ModelConfig::kBranchCount; ++k) {
      const std::string b = names::branch(p, k);
      add_conv(out, b + ".conv_a", k == 1 ? Cd : 2 * Cd, Cd, 3);
      add_conv(out, b + ".conv_b", Cd, Cd, 3, true);
      add_attention(out, b + ".attn", cfg.attention, Cd);
    }
    const int fused = (ModelConfig::kBranchCount + (cfg.basic_branch ? 1 : 0)) * Cd;
    add_conv(out, p + ".fuse", fused, C, 1);
    add_attention(out, p + ".attn", cfg.attention, C);
  }

  if (cfg.upsampler == Upsampler::SubPixel) {
    add_conv(out, "recon.subpixel", C, C * cfg.scale * cfg.scale, 3);
  } else {
    const auto steps = cfg.recon_steps();
    std::set<std::string> seen;
    for (std::size_t j = 0; j < steps.size(); ++j) {
      const std::string s = names::recon_step(cfg, static_cast<int>(j));
      if (!seen.insert(s).second) continue;
      add_conv(out, s + ".conv_a", C, C, 3);
      if (cfg.recon_attention) add_attention(out, s + ".attn", AttentionKind::LERCA, C);
      add_conv(out, s + ".conv_b", C, C, 3, true);
    }
  }
  add_conv(out, "tail", C, cfg.in_channels, 3);
  return out;
}

}  // namespace mbmfn
