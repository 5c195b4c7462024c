// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Runs the smoke training, so it takes a few minutes.

#include "mbmfn/ablation.hpp"
#include "mbmfn/blocks.hpp"
#include "mbmfn/evaluation.hpp"
#include "mbmfn/gradcheck.hpp"
#include "mbmfn/run_config.hpp"
#include "mbmfn/training.hpp"
#include "support/fixtures.hpp"
#include "support/metric_oracles.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace mbmfn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.num_blocks = 1;
  cfg.trunk_channels = 8;
  cfg.distill_channels = 6;
  return cfg;
}

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto ops = check_op_gradients(1);
  const auto model = check_model_gradients(tiny_model(), 8, 8, 2);
  const double elapsed = seconds_since(t0);

  bool ok = ops.passed(1e-6) && model.passed(1e-6) && elapsed < 120;
  std::string missing;
  for (const char* op : {"conv3x3", "conv1x1", "leaky_relu", "sigmoid", "channel_mean", "channel_std", "concat",
                         "upsample_bilinear", "l1_loss"}) {
    bool found = false;
    for (const auto& e : ops.entries) found = found || e.name.rfind(std::string(op) + ".", 0) == 0;
    if (!found) missing += std::string(" ") + op;
  }
  ok = ok && missing.empty();
  std::string detail = "ops max " + fmt(ops.max_error(), 3) + ", model max " + fmt(model.max_error(), 3) + " over " +
                       std::to_string(model.entries.size()) + " tensors, " + fmt(elapsed, 3) + " s";
  for (const auto& f : ops.failures(1e-6)) detail += "; bad " + f;
  for (const auto& f : model.failures(1e-6)) detail += "; bad " + f;
  if (!missing.empty()) detail += "; missing op checks:" + missing;
  return {ok, detail};
}

// Every weight zero and every attention mask saturated shut.
void silence(ParamStore<double>& store) {
  for (auto& [name, t] : store.entries()) {
    const bool mask_bias = name.ends_with(".attn.bias") || name.ends_with(".attn.excite.bias");
    t.array().setConstant(mask_bias ? -1e3 : 0.0);
  }
}

Outcome zero_network() {
  std::vector<AblationVariant> variants;
  for (auto axis : {AblationAxis::Table1, AblationAxis::Table2, AblationAxis::Table3})
    for (auto& v : ablation_variants(axis, tiny_model())) variants.push_back(v);
  for (int scale : {2, 3}) {
    ModelConfig m = tiny_model();
    m.scale = scale;
    variants.push_back({"x" + std::to_string(scale), m});
  }

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (const auto& v : variants) {
    auto store = init_params<double>(v.model, 4);
    silence(store);
    Tensor<double> img(Shape{1, 1, 12, 10});
    for (Index i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
    const auto out = run_model(v.model, store, img);
    const auto ref = upsample_bilinear(Var<double>::constant(img), v.model.scale).value();
    if (out.shape() != ref.shape() || !(out.array() == ref.array()).all())
      return {false, v.label + ": output differs from bilinear upsampling"};
  }
  return {true, std::to_string(variants.size()) + " configurations equal bilinear upsampling bit for bit"};
}

Outcome parameter_accounting() {
  constexpr double kReferenceTotal = 1224e3, kReferenceSharingDelta = 67e3;
  const ModelConfig base;
  const Index total = count_params(init_params<float>(base, 1));
  const bool total_ok = std::abs(total - kReferenceTotal) <= 0.1 * kReferenceTotal;

  const Index C = base.trunk_channels;
  const Index one_lerca = C * C + C;
  const Index one_step = 2 * (C * C * 9 + C) + one_lerca;
  auto count = [](ModelConfig m) { return count_params(init_params<float>(m, 1)); };

  ModelConfig plain = base;
  plain.recon_attention = false;
  const Index lerca_delta = count(base) - count(plain);
  ModelConfig direct = plain;
  direct.upsampler = Upsampler::NearestDirect;
  ModelConfig direct_lerca = direct;
  direct_lerca.recon_attention = true;
  const Index direct_delta = count(direct_lerca) - count(direct);

  ModelConfig unshared = base;
  unshared.recon_weight_sharing = false;
  const Index sharing_delta = count(unshared) - count(base);
  const bool sharing_near = std::abs(sharing_delta - kReferenceSharingDelta) <= 30e3;

  const bool ok = total_ok && lerca_delta == one_lerca && direct_delta == one_lerca &&
                  sharing_delta == one_step && sharing_near;
  return {ok, "total " + std::to_string(total) + " vs 1224K +-10%; LERCA delta " + std::to_string(direct_delta) +
                  " (one LERCA = " + std::to_string(one_lerca) + "); sharing delta " + std::to_string(sharing_delta) +
                  " (one step block = " + std::to_string(one_step) + ", reference 67K +-30K)"};
}

Outcome metrics() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(24, 48);
  std::uniform_real_distribution<float> u(0, 1);
  double worst_psnr = 0, worst_ssim = 0;
  for (int i = 0; i < 50; ++i) {
    const int h = dim(rng), w = dim(rng), shave = i % 5;
    ImagePlane a(h, w, 1), b(h, w, 1);
    for (auto& v : a.data) v = u(rng);
    for (std::size_t k = 0; k < b.data.size(); ++k)
      b.data[k] = i % 2 ? u(rng) : std::clamp(a.data[k] + 0.1f * (u(rng) - 0.5f), 0.0f, 1.0f);
    worst_psnr = std::max(worst_psnr, std::abs(psnr(a, b, shave) - testing::psnr_reference(a, b, shave)));
    worst_ssim = std::max(worst_ssim, std::abs(ssim(a, b, shave) - testing::ssim_reference(a, b, shave)));
  }
  const auto img = rgb_to_y(testing::synthetic_photo(40, 40, 5));
  const bool sentinel = std::isinf(psnr(img, img, 4)) && psnr(img, img, 4) > 0;
  const bool unit = ssim(img, img, 4) == 1.0;
  const bool ok = worst_psnr <= 1e-9 && worst_ssim <= 1e-6 && sentinel && unit;
  return {ok, "max |dPSNR| " + fmt(worst_psnr, 3) + " dB, max |dSSIM| " + fmt(worst_ssim, 3) +
                  (sentinel ? ", psnr(a,a) = +inf" : ", psnr(a,a) is finite") +
                  (unit ? ", ssim(a,a) = 1" : ", ssim(a,a) != 1")};
}

// Smoke run: d=2, C=24 at x4 on one 2K-style synthetic photo. Loss drop is
// measured from the first iteration to the mean of the last 20.
Outcome smoke_training() {
  constexpr int kIters = 500, kTail = 20;
  const auto dir = testing::scratch_dir("acceptance_smoke");
  save_image(testing::synthetic_photo(192, 192, 2024), dir / "hr.png");
  DatasetManifest manifest;
  manifest.entries.push_back({dir / "hr.png", std::nullopt});

  ModelConfig model;
  model.num_blocks = 2;
  model.trunk_channels = 24;
  model.distill_channels = 16;
  TrainConfig cfg;
  cfg.batch = 8;
  cfg.hr_patch = 96;
  cfg.lr0 = 4e-3;
  cfg.iters_per_epoch = kIters;
  cfg.total_epochs = 1;
  cfg.checkpoint_every = 0;
  cfg.log_every = 50;

  const auto t0 = Clock::now();
  auto store = init_params<float>(model, cfg.seed);
  auto state = initial_state(cfg);
  PatchSampler sampler(manifest, {.scale = 4, .hr_patch = cfg.hr_patch});
  std::vector<double> losses;
  train(model, store, state, sampler, cfg, {dir / "run", nullptr, [&](std::int64_t, double l) { losses.push_back(l); }});

  double tail = 0;
  for (int i = kIters - kTail; i < kIters; ++i) tail += losses[i] / kTail;
  const double reduction = 1 - tail / losses.front();

  const auto hr = load_hr_y(dir / "hr.png", 4);
  const auto lr = degrade(hr, 4);
  const double ours = psnr(model_upscaler(model, store)(lr, 4), hr, 4);
  const double bicubic = psnr(bicubic_upscaler()(lr, 4), hr, 4);
  const double elapsed = seconds_since(t0);

  const bool ok = reduction >= 0.9 && ours - bicubic >= 0.5 && elapsed < 900;
  return {ok, "L1 " + fmt(losses.front()) + " -> " + fmt(tail) + " (" + fmt(100 * reduction, 3) + "% lower); PSNR " +
                  fmt(ours) + " dB vs bicubic " + fmt(bicubic) + " dB (" + (ours >= bicubic ? "+" : "") +
                  fmt(ours - bicubic, 3) + "); " + fmt(elapsed, 3) + " s"};
}

Outcome ablation_harness() {
  std::string summary, errors;
  bool ok = true;
  for (auto axis : {AblationAxis::Table1, AblationAxis::Table2, AblationAxis::Table3}) {
    const auto results = run_ablation(axis, ModelConfig{}, 1, 16);
    int good = 0;
    for (const auto& r : results) {
      if (r.ok && r.params > 0) ++good;
      else errors += "; " + r.variant.label + ": " + r.error;
    }
    ok = ok && results.size() == 6 && good == 6;
    summary += (summary.empty() ? "" : ", ") + to_string(axis) + " " + std::to_string(good) + "/" +
               std::to_string(results.size());
  }
  return {ok, summary + errors};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const auto root = testing::scratch_dir("acceptance_determinism");
  save_image(testing::synthetic_photo(80, 80, 7), root / "train.png");
  DatasetManifest manifest;
  manifest.entries.push_back({root / "train.png", std::nullopt});
  TrainConfig cfg;
  cfg.batch = 2;
  cfg.hr_patch = 32;
  cfg.iters_per_epoch = 5;
  cfg.total_epochs = 2;
  cfg.log_every = 2;
  cfg.checkpoint_every = 1;
  cfg.seed = 9;

  auto run = [&](const fs::path& dir) {
    auto store = init_params<float>(tiny_model(), cfg.seed);
    auto state = initial_state(cfg);
    PatchSampler sampler(manifest, {.scale = 4, .hr_patch = cfg.hr_patch});
    train(tiny_model(), store, state, sampler, cfg, {dir, nullptr, {}});
  };
  run(root / "a");
  run(root / "b");

  int compared = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const auto name = entry.path().filename();
    if (!fs::exists(root / "b" / name) || slurp(entry.path()) != slurp(root / "b" / name))
      return {false, name.string() + " differs between runs"};
    ++compared;
  }
  const bool ok = compared >= 4 && fs::exists(root / "a" / "loss.csv");
  return {ok, std::to_string(compared) + " files byte-identical (loss.csv and checkpoints)"};
}

Outcome long_run_recipe() {
  const fs::path path = fs::path(MBMFN_SOURCE_DIR) / "configs" / "div2k_x4.cfg";
  const RunConfig rc = load_run_config(path);
  std::string bad;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) bad += " " + what;
  };
  expect(rc.train.lr0 == 2e-4, "lr0");
  expect(rc.train.batch == 24, "batch");
  expect(rc.train.hr_patch == 192, "hr_patch");
  expect(rc.model.num_blocks == 6, "num_blocks");
  expect(rc.model.scale == 4, "scale");
  expect(rc.model.leaky_slope == 0.05, "leaky_slope");
  expect(rc.train.iters_per_epoch == 1000, "iters_per_epoch");
  expect(rc.train.decay_period == 200, "decay_period");
  expect(rc.train.total_epochs == 400, "total_epochs");
  expect(rc.model.attention == AttentionKind::LERCA && rc.model.upsampler == Upsampler::NearestStepwise &&
             rc.model.recon_attention && rc.model.recon_weight_sharing,
         "architecture");
  try {
    rc.model.validate();
    rc.train.validate(rc.model);
  } catch (const std::exception& e) {
    bad += std::string(" validation (") + e.what() + ")";
  }
  return {bad.empty(), bad.empty() ? path.filename().string() +
                                         " matches the reference recipe; benchmark scores need the full run"
                                   : "mismatched:" + bad};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"zero-network identity", zero_network},
      {"parameter accounting", parameter_accounting},
      {"metric oracles", metrics},
      {"smoke training", smoke_training},
      {"ablation harness", ablation_harness},
      {"determinism", determinism},
      {"long-run recipe", long_run_recipe},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
