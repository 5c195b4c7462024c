#pragma once

#include "mbmfn/config.hpp"
#include "mbmfn/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mbmfn {

/// Analytic-vs-numeric agreement for one parameter tensor or op input.
struct GradCheckEntry {
  std::string name;
  double relative_error = 0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  Index elements = 0;
  Index kink_skipped = 0;  // elements whose difference step straddles a kink at every tried step
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double seconds = 0;

  double max_error() const;
  std::vector<std::string> failures(double tolerance) const;
  bool passed(double tolerance) const { return failures(tolerance).empty(); }
};

struct GradCheckOptions {
  double step = 1e-5;
  // Retry steps tried in order when a central difference crosses a
  // leaky-relu or L1 kink.
  std::vector<double> fallback_steps{1e-7, 1e-9};
};

/// Per-op checks in real64: conv (3x3 and 1x1), leaky relu, sigmoid,
/// channel mean/std, concat, nearest and bilinear upsampling, pixel
/// shuffle, L1 loss.
GradCheckReport check_op_gradients(std::uint64_t seed, const GradCheckOptions& opts = {});

/// End-to-end check of every parameter of the network under an L1 loss.
/// All parameters are randomized (including zero-initialized ones) so no
/// gradient is trivially zero.
GradCheckReport check_model_gradients(const ModelConfig& cfg, Index height, Index width, std::uint64_t seed,
                                      const GradCheckOptions& opts = {});

}  // namespace mbmfn
