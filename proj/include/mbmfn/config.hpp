#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mbmfn {

/// Which tensor of branch k-1 is handed to branch k.
enum class BranchInput {
  BeforeResidual,  // BRW: conv output before the skip add
  AfterResidual,   // ARW: residual block output
  AfterAttention,  // AAW: attention output
};

enum class AttentionKind { None, SE, CA, RCA, CCA, LERCA };

enum class Upsampler { NearestDirect, NearestStepwise, SubPixel };

std::string to_string(BranchInput v);
std::string to_string(AttentionKind v);
std::string to_string(Upsampler v);
BranchInput parse_branch_input(std::string_view s);
AttentionKind parse_attention_kind(std::string_view s);
Upsampler parse_upsampler(std::string_view s);

struct ModelConfig {
  static constexpr int kBranchCount = 4;

  int scale = 4;
  int num_blocks = 6;
  int trunk_channels = 56;
  int distill_channels = 40;
  double leaky_slope = 0.05;
  BranchInput branch_input = BranchInput::AfterResidual;
  bool basic_branch = true;
  AttentionKind attention = AttentionKind::LERCA;
  Upsampler upsampler = Upsampler::NearestStepwise;
  bool recon_attention = true;
  bool recon_weight_sharing = true;
  int in_channels = 1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Upsampling factor of each reconstruction step, in order.
  std::vector<int> recon_steps() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Bottleneck width of the SE/CA/RCA/CCA attention variants (ratio 4).
inline int bottleneck_width(int channels) { return channels / 4 > 0 ? channels / 4 : 1; }

}  // namespace mbmfn
