// mbmfn: train, evaluate, run and inspect MBMFN super-resolution models.

#include "mbmfn/ablation.hpp"
#include "mbmfn/blocks.hpp"
#include "mbmfn/checkpoint.hpp"
#include "mbmfn/evaluation.hpp"
#include "mbmfn/gradcheck.hpp"
#include "mbmfn/run_config.hpp"
#include "mbmfn/training.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

using namespace mbmfn;
namespace fs = std::filesystem;

namespace {

// Bad input from the user: message goes to stderr, exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Run configuration file (key = value)");
  cmd->add_option("--seed", o.seed, "Overrides train.seed");
  cmd->add_option("--set", o.overrides, "Override a config key, e.g. --set model.num_blocks=4")->allow_extra_args(false);
}

RunConfig resolve_config(const CommonOptions& o, RunConfig cfg = {}) {
  try {
    if (!o.config.empty()) cfg = load_run_config(o.config);
    for (const auto& s : o.overrides) apply_override(cfg, s);
    if (o.seed) cfg.train.seed = *o.seed;
    cfg.model.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

DatasetManifest manifest_for(const std::string& field, const std::string& path) {
  if (path.empty()) throw UsageError(field + ": no manifest given");
  try {
    return load_manifest(path);
  } catch (const ImageError& e) {
    throw UsageError(field + ": " + e.what());
  }
}

std::string kilo(Index n) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << n / 1000.0 << "K";
  return s.str();
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  CommonOptions common;
  std::optional<int> total_epochs;
  std::string resume;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = resolve_config(a.common);
  if (a.total_epochs) cfg.train.total_epochs = *a.total_epochs;
  try {
    cfg.train.validate(cfg.model);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto manifest = manifest_for("data.train_manifest", cfg.data.train_manifest);
  const fs::path out = cfg.data.checkpoint_dir;
  fs::create_directories(out);
  std::ofstream(out / "effective.cfg") << serialize(cfg);

  ParamStore<float> store;
  TrainState state;
  if (!a.resume.empty()) {
    auto ck = load_checkpoint(a.resume);
    if (!(ck.model == cfg.model)) throw UsageError(a.resume + ": model config differs from the run config");
    if (!ck.state) throw UsageError(a.resume + ": checkpoint has no training state to resume");
    store = std::move(ck.params);
    state = std::move(*ck.state);
  } else {
    store = init_params<float>(cfg.model, cfg.train.seed);
    state = initial_state(cfg.train);
  }
  PatchSampler sampler(manifest,
                       {.scale = cfg.model.scale,
                        .hr_patch = cfg.train.hr_patch,
                        .precomputed_lr = cfg.train.precomputed_lr,
                        .augment = cfg.train.augment},
                       &std::cerr);
  std::cout << "training " << kilo(count_params(store)) << " parameters on " << sampler.usable_images()
            << " image(s), epochs " << state.epoch << ".." << cfg.train.total_epochs << ", output " << out.string()
            << std::endl;
  train(cfg.model, store, state, sampler, cfg.train, {out, &std::cout, {}});
  std::cout << "wrote " << (out / "final.ckpt").string() << std::endl;
  return 0;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  CommonOptions common;
  std::string checkpoint;
  std::string model;
  std::vector<std::string> manifests;
  std::optional<int> scale;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  RunConfig cfg = resolve_config(a.common);
  Upscaler upscaler;
  std::string model_id;
  int scale = a.scale.value_or(cfg.model.scale);
  if (!a.checkpoint.empty()) {
    auto ck = load_checkpoint(a.checkpoint);
    if (a.scale && *a.scale != ck.model.scale)
      throw UsageError("--scale " + std::to_string(*a.scale) + " does not match the checkpoint's x" +
                       std::to_string(ck.model.scale));
    scale = ck.model.scale;
    model_id = fs::path(a.checkpoint).stem().string();
    upscaler = model_upscaler(ck.model, std::move(ck.params));
  } else if (a.model == "bicubic" || a.model == "bilinear") {
    model_id = a.model;
    upscaler = a.model == "bicubic" ? bicubic_upscaler() : bilinear_upscaler();
  } else {
    throw UsageError("eval needs --checkpoint or --model bicubic|bilinear");
  }

  const auto manifests = a.manifests.empty() ? cfg.data.eval_manifests : a.manifests;
  if (manifests.empty()) throw UsageError("data.eval_manifests: no evaluation manifest given");
  const fs::path out = a.out.empty() ? fs::path(cfg.data.report_dir) : fs::path(a.out);
  fs::create_directories(out);
  for (const auto& path : manifests) {
    const auto manifest = manifest_for("data.eval_manifests", path);
    const std::string name = fs::path(path).stem().string();
    const auto report = evaluate(upscaler, manifest, scale, name, model_id);
    const std::string base = name + "_x" + std::to_string(scale) + "_" + model_id;
    std::ofstream csv(out / (base + ".csv"));
    write_csv(report, csv);
    std::ofstream txt(out / (base + ".txt"));
    write_table(report, txt);
    write_table(report, std::cout);
    std::cout << '\n';
  }
  return 0;
}

// ---- infer ---------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
};

int cmd_infer(const InferArgs& a) {
  const auto ck = load_checkpoint(a.checkpoint);
  const ImagePlane rgb = load_image(a.input);
  const int s = ck.model.scale;
  const ImagePlane ycc = rgb_to_ycbcr(rgb);
  const ImagePlane sr_y = from_tensor(run_model(ck.model, ck.params, to_tensor<float>(ycc.channel(0))));
  const ImagePlane up = bicubic_resize(ycc, rgb.height * s, rgb.width * s);
  ImagePlane merged = up;
  std::copy(sr_y.data.begin(), sr_y.data.end(), merged.data.begin());
  save_image(ycbcr_to_rgb(merged), a.output);
  std::cout << a.input << " (" << rgb.width << "x" << rgb.height << ") -> " << a.output << " (" << rgb.width * s
            << "x" << rgb.height * s << ")\n";
  return 0;
}

// ---- ablate --------------------------------------------------------------

struct AblateArgs {
  CommonOptions common;
  std::string axis;
  int epochs = 0;
};

int cmd_ablate(const AblateArgs& a) {
  RunConfig cfg = resolve_config(a.common);
  AblationAxis axis;
  try {
    axis = parse_ablation_axis(a.axis);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto results = run_ablation(axis, cfg.model, cfg.train.seed);
  std::cout << std::left << std::setw(34) << "variant" << std::right << std::setw(12) << "params" << "  status\n";
  for (const auto& r : results)
    std::cout << std::left << std::setw(34) << r.variant.label << std::right << std::setw(12)
              << (r.ok ? kilo(r.params) : "-") << "  " << (r.ok ? "ok" : "FAILED: " + r.error) << '\n';
  if (a.epochs <= 0) return 0;

  // Optional short training of every variant followed by evaluation.
  const auto manifest = manifest_for("data.train_manifest", cfg.data.train_manifest);
  std::vector<std::pair<std::string, DatasetManifest>> evals;
  for (const auto& p : cfg.data.eval_manifests)
    evals.emplace_back(fs::path(p).stem().string(), manifest_for("data.eval_manifests", p));
  TrainConfig tc = cfg.train;
  tc.total_epochs = a.epochs;
  std::cout << "\nvariant results after " << a.epochs << " epoch(s):\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.ok) continue;
    try {
      tc.validate(r.variant.model);
      auto store = init_params<float>(r.variant.model, tc.seed);
      auto state = initial_state(tc);
      PatchSampler sampler(manifest, {.scale = r.variant.model.scale, .hr_patch = tc.hr_patch,
                                      .precomputed_lr = tc.precomputed_lr, .augment = tc.augment});
      const fs::path dir = fs::path(cfg.data.checkpoint_dir) / ("ablate_" + a.axis) / std::to_string(i);
      train(r.variant.model, store, state, sampler, tc, {dir, nullptr, {}});
      std::cout << std::left << std::setw(34) << r.variant.label;
      for (const auto& [name, m] : evals) {
        const auto rep = evaluate(model_upscaler(r.variant.model, store), m, r.variant.model.scale, name, r.variant.label);
        std::cout << "  " << name << " " << std::fixed << std::setprecision(3) << rep.mean_psnr() << "/"
                  << std::setprecision(4) << rep.mean_ssim();
      }
      std::cout << std::defaultfloat << '\n';
    } catch (const std::exception& e) {
      std::cout << r.variant.label << "  FAILED: " << e.what() << '\n';
    }
  }
  return 0;
}

// ---- gradcheck -----------------------------------------------------------

int cmd_gradcheck(const CommonOptions& o, double tolerance) {
  RunConfig tiny;
  tiny.model.num_blocks = 1;
  tiny.model.trunk_channels = 8;
  tiny.model.distill_channels = 6;
  const RunConfig cfg = resolve_config(o, tiny);
  const auto ops = check_op_gradients(cfg.train.seed);
  const auto model = check_model_gradients(cfg.model, 8, 8, cfg.train.seed);
  std::vector<std::string> failed;
  for (const auto* rep : {&ops, &model}) {
    for (const auto& e : rep->entries)
      std::cout << std::left << std::setw(40) << e.name << std::scientific << std::setprecision(2)
                << e.relative_error << std::defaultfloat << (e.kink_skipped ? "  (" + std::to_string(e.kink_skipped) +
                                                                                    " kink elements skipped)"
                                                                              : "")
                << '\n';
    for (const auto& f : rep->failures(tolerance)) failed.push_back(f);
  }
  std::cout << "ops " << std::fixed << std::setprecision(2) << ops.seconds << "s, model " << model.seconds
            << "s, max error " << std::scientific << std::max(ops.max_error(), model.max_error()) << '\n';
  if (failed.empty()) {
    std::cout << "gradcheck passed (tolerance " << tolerance << ")\n";
    return 0;
  }
  std::cerr << "gradcheck FAILED for:\n";
  for (const auto& f : failed) std::cerr << "  " << f << '\n';
  return 1;
}

// ---- params --------------------------------------------------------------

int cmd_params(const CommonOptions& o) {
  const RunConfig cfg = resolve_config(o);
  const auto store = init_params<float>(cfg.model, 0);
  auto row = [](const std::string& name, Index n) {
    std::cout << std::left << std::setw(28) << name << std::right << std::setw(10) << n << '\n';
  };
  Index accounted = count_params(store, "head.") + count_params(store, "recon.") + count_params(store, "tail.");
  row("head", count_params(store, "head."));
  for (int i = 0; i < cfg.model.num_blocks; ++i) {
    const std::string b = names::block(i);
    const Index block = count_params(store, b + ".");
    accounted += block;
    row(b, block);
    row("  distill", count_params(store, b + ".distill."));
    for (int k = 1; k <= ModelConfig::kBranchCount; ++k)
      row("  branch" + std::to_string(k), count_params(store, names::branch(b, k) + "."));
    row("  fuse", count_params(store, b + ".fuse."));
    row("  attn", count_params(store, b + ".attn."));
  }
  row("recon", count_params(store, "recon."));
  row("tail", count_params(store, "tail."));
  const Index total = count_params(store);
  row("total", total);
  std::cout << "(" << kilo(total) << ")\n";
  if (accounted != total) {
    std::cerr << "accounting mismatch: parts sum to " << accounted << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MBMFN single-image super-resolution"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model from a run configuration");
  add_common(train, train_args.common);
  train->add_option("--total-epochs", train_args.total_epochs, "Overrides train.total_epochs");
  train->add_option("--resume", train_args.resume, "Continue from a checkpoint written by train");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Y-channel PSNR/SSIM on evaluation manifests");
  add_common(eval, eval_args.common);
  eval->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint");
  eval->add_option("--model", eval_args.model, "Baseline instead of a checkpoint: bicubic or bilinear");
  eval->add_option("--manifest", eval_args.manifests, "Manifest(s); defaults to data.eval_manifests");
  eval->add_option("--scale", eval_args.scale, "Upscaling factor (must match the checkpoint)");
  eval->add_option("--out", eval_args.out, "Report directory; defaults to data.report_dir");

  InferArgs infer_args;
  auto* infer = app.add_subcommand("infer", "Super-resolve one PNG");
  infer->add_option("--checkpoint", infer_args.checkpoint)->required();
  infer->add_option("--input", infer_args.input)->required();
  infer->add_option("--output", infer_args.output)->required();

  AblateArgs ablate_args;
  auto* ablate = app.add_subcommand("ablate", "Enumerate an ablation axis: table1, table2 or table3");
  add_common(ablate, ablate_args.common);
  ablate->add_option("axis", ablate_args.axis)->required();
  ablate->add_option("--epochs", ablate_args.epochs, "Train and evaluate each variant for this many epochs");

  CommonOptions grad_opts;
  double tolerance = 1e-6;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every op and every model parameter");
  add_common(grad, grad_opts);
  grad->add_option("--tolerance", tolerance);

  CommonOptions param_opts;
  auto* params = app.add_subcommand("params", "Parameter counts per block and branch");
  add_common(params, param_opts);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args);
    if (*infer) return cmd_infer(infer_args);
    if (*ablate) return cmd_ablate(ablate_args);
    if (*grad) return cmd_gradcheck(grad_opts, tolerance);
    if (*params) return cmd_params(param_opts);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
