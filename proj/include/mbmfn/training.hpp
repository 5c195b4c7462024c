#pragma once

#include "mbmfn/config.hpp"
#include "mbmfn/dataset.hpp"
#include "mbmfn/optim.hpp"
#include "mbmfn/params.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <random>

namespace mbmfn {

struct TrainConfig {
  int batch = 24;
  int hr_patch = 192;
  double lr0 = 2e-4;
  int decay_period = 200;  // epochs per halving
  int iters_per_epoch = 1000;
  int total_epochs = 400;
  std::uint64_t seed = 1;
  AdamConfig adam;
  int checkpoint_every = 25;  // epochs; 0 disables periodic checkpoints
  int log_every = 100;        // iterations per loss-log row
  int memory_budget_mb = 16384;
  bool augment = false;
  bool precomputed_lr = false;

  /// Throws std::invalid_argument naming the offending `train.` field. The
  /// memory estimate for one step of `model` must fit the budget.
  void validate(const ModelConfig& model) const;

  bool operator==(const TrainConfig&) const = default;
};

/// lr0 * 0.5^floor(epoch / decay_period).
double learning_rate(const TrainConfig& cfg, int epoch);

/// Bytes of activations and gradients one training step keeps alive,
/// measured by recording a small probe forward pass and scaling by area.
std::size_t estimate_step_bytes(const ModelConfig& model, int batch, int hr_patch);

struct TrainState {
  int epoch = 0;                // completed epochs
  std::int64_t iteration = 0;   // completed optimizer steps
  double lr = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  AdamState<float> adam;
  std::mt19937_64 rng;

  bool operator==(const TrainState&) const = default;
};

TrainState initial_state(const TrainConfig& cfg);

struct Batch {
  Tensor<float> lr;  // (batch, 1, p/s, p/s)
  Tensor<float> hr;  // (batch, 1, p, p)
};

Batch sample_batch(PatchSampler& sampler, std::mt19937_64& rng, int batch);

/// Forward, L1, backward and one Adam update. Returns the loss before the
/// update. Throws std::runtime_error on a non-finite loss without touching
/// the parameters.
double train_step(const ModelConfig& model, ParamStore<float>& store, AdamState<float>& adam, const Batch& batch,
                  double lr, const AdamConfig& adam_cfg);

struct TrainOutputs {
  std::filesystem::path dir;    // loss.csv and *.ckpt are written here
  std::ostream* progress = nullptr;
  std::function<void(std::int64_t iteration, double loss)> on_step;
};

/// Runs epochs state.epoch .. cfg.total_epochs - 1. Writes `loss.csv`
/// (epoch,iter,lr,l1; l1 averaged over log_every steps), `epoch_NNNN.ckpt`
/// every checkpoint_every epochs, `best.ckpt` when the epoch mean improves
/// and `final.ckpt`. A non-finite loss aborts with the last checkpoint kept.
void train(const ModelConfig& model, ParamStore<float>& store, TrainState& state, PatchSampler& sampler,
           const TrainConfig& cfg, const TrainOutputs& out);

}  // namespace mbmfn
