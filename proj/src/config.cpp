#include "mbmfn/config.hpp"

#include <stdexcept>

namespace mbmfn {

std::string to_string(BranchInput v) {
  switch (v) {
    case BranchInput::BeforeResidual: return "BRW";
    case BranchInput::AfterResidual: return "ARW";
    case BranchInput::AfterAttention: return "AAW";
  }
  return "?";
}

std::string to_string(AttentionKind v) {
  switch (v) {
    case AttentionKind::None: return "None";
    case AttentionKind::SE: return "SE";
    case AttentionKind::CA: return "CA";
    case AttentionKind::RCA: return "RCA";
    case AttentionKind::CCA: return "CCA";
    case AttentionKind::LERCA: return "LERCA";
  }
  return "?";
}

std::string to_string(Upsampler v) {
  switch (v) {
    case Upsampler::NearestDirect: return "NearestDirect";
    case Upsampler::NearestStepwise: return "NearestStepwise";
    case Upsampler::SubPixel: return "SubPixel";
  }
  return "?";
}

BranchInput parse_branch_input(std::string_view s) {
  if (s == "BRW") return BranchInput::BeforeResidual;
  if (s == "ARW") return BranchInput::AfterResidual;
  if (s == "AAW") return BranchInput::AfterAttention;
  throw std::invalid_argument("unknown branch input mode '" + std::string(s) + "' (expected BRW, ARW or AAW)");
}

AttentionKind parse_attention_kind(std::string_view s) {
  for (auto k : {AttentionKind::None, AttentionKind::SE, AttentionKind::CA, AttentionKind::RCA, AttentionKind::CCA,
                 AttentionKind::LERCA})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown attention kind '" + std::string(s) + "'");
}

Upsampler parse_upsampler(std::string_view s) {
  for (auto u : {Upsampler::NearestDirect, Upsampler::NearestStepwise, Upsampler::SubPixel})
    if (s == to_string(u)) return u;
  throw std::invalid_argument("unknown upsampler '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw std::invalid_argument("model." + field + ": " + msg);
  };
  if (scale < 2 || scale > 4) fail("scale", "must be 2, 3 or 4");
  if (num_blocks < 1) fail("num_blocks", "must be >= 1");
  if (trunk_channels < 1) fail("trunk_channels", "must be >= 1");
  if (distill_channels < 1 || distill_channels > trunk_channels)
    fail("distill_channels", "must lie in [1, trunk_channels]");
  if (!(leaky_slope > 0 && leaky_slope < 1)) fail("leaky_slope", "must lie in (0, 1)");
  if (in_channels < 1) fail("in_channels", "must be >= 1");
}

std::vector<int> ModelConfig::recon_steps() const {
  if (upsampler == Upsampler::NearestStepwise && scale == 4) return {2, 2};
  return {scale};
}

}  // namespace mbmfn
