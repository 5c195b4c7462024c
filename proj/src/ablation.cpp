#include "mbmfn/ablation.hpp"

#include "mbmfn/blocks.hpp"

#include <stdexcept>

namespace mbmfn {

AblationAxis parse_ablation_axis(std::string_view s) {
  if (s == "table1") return AblationAxis::Table1;
  if (s == "table2") return AblationAxis::Table2;
  if (s == "table3") return AblationAxis::Table3;
  throw std::invalid_argument("unknown ablation axis '" + std::string(s) + "' (expected table1, table2 or table3)");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::Table1: return "table1";
    case AblationAxis::Table2: return "table2";
    case AblationAxis::Table3: return "table3";
  }
  return "?";
}

std::vector<AblationVariant> ablation_variants(AblationAxis axis, const ModelConfig& base) {
  std::vector<AblationVariant> out;
  switch (axis) {
    case AblationAxis::Table1:
      for (bool basic : {false, true})
        for (auto wiring : {BranchInput::BeforeResidual, BranchInput::AfterResidual, BranchInput::AfterAttention}) {
          ModelConfig m = base;
          m.basic_branch = basic;
          m.branch_input = wiring;
          out.push_back({to_string(wiring) + (basic ? " +basic" : " -basic"), m});
        }
      break;
    case AblationAxis::Table2:
      for (auto kind : {AttentionKind::None, AttentionKind::SE, AttentionKind::CA, AttentionKind::RCA,
                        AttentionKind::CCA, AttentionKind::LERCA}) {
        ModelConfig m = base;
        m.attention = kind;
        out.push_back({"MBMFB-" + to_string(kind), m});
      }
      break;
    case AblationAxis::Table3: {
      struct Row {
        const char* label;
        Upsampler up;
        bool attention;
        bool sharing;
      };
      const Row rows[] = {
          {"U-Nearest-x4", Upsampler::NearestDirect, false, true},
          {"U-Nearest-LERCA-x4", Upsampler::NearestDirect, true, true},
          {"U-Nearest-x2-x2 shared", Upsampler::NearestStepwise, false, true},
          {"U-Nearest-LERCA-x2-x2 shared", Upsampler::NearestStepwise, true, true},
          {"U-Nearest-LERCA-x2-x2 unshared", Upsampler::NearestStepwise, true, false},
          {"U-Subpixel", Upsampler::SubPixel, false, true},
      };
      for (const auto& r : rows) {
        ModelConfig m = base;
        m.scale = 4;
        m.upsampler = r.up;
        m.recon_attention = r.attention;
        m.recon_weight_sharing = r.sharing;
        out.push_back({r.label, m});
      }
      break;
    }
  }
  return out;
}

std::vector<AblationResult> run_ablation(AblationAxis axis, const ModelConfig& base, std::uint64_t seed, Index probe) {
  std::vector<AblationResult> results;
  for (auto& variant : ablation_variants(axis, base)) {
    AblationResult r;
    r.variant = variant;
    try {
      const auto store = init_params<float>(variant.model, seed);
      r.params = count_params(store);
      std::mt19937_64 rng(seed);
      Tensor<float> input(Shape{1, variant.model.in_channels, probe, probe});
      for (Index i = 0; i < input.size(); ++i) input.data()[i] = static_cast<float>(uniform01(rng));
      const auto out = run_model(variant.model, store, input);
      const Shape expect{1, variant.model.in_channels, probe * variant.model.scale, probe * variant.model.scale};
      if (out.shape() != expect) throw ShapeError("output shape " + out.shape().str() + ", expected " + expect.str());
      if (!out.all_finite()) throw std::runtime_error("non-finite output");
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace mbmfn
