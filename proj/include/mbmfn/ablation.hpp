#pragma once

#include "mbmfn/config.hpp"
#include "mbmfn/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mbmfn {

/// table1: branch input wiring x basic branch; table2: fusion-block
/// attention; table3: reconstruction upsampler, attention and sharing.
enum class AblationAxis { Table1, Table2, Table3 };

AblationAxis parse_ablation_axis(std::string_view s);
std::string to_string(AblationAxis axis);

struct AblationVariant {
  std::string label;
  ModelConfig model;
};

/// Variants of `base` along one axis, in a fixed row order. `table3`
/// variants are always x4.
std::vector<AblationVariant> ablation_variants(AblationAxis axis, const ModelConfig& base);

struct AblationResult {
  AblationVariant variant;
  Index params = 0;
  bool ok = false;
  std::string error;  // set when building or the probe forward failed
};

/// Builds each variant, counts its parameters and runs one forward pass on
/// a random probe x probe input. Failures are recorded per variant.
std::vector<AblationResult> run_ablation(AblationAxis axis, const ModelConfig& base, std::uint64_t seed,
                                         Index probe = 16);

}  // namespace mbmfn
