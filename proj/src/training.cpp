#include "mbmfn/training.hpp"

#include "mbmfn/blocks.hpp"
#include "mbmfn/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace mbmfn {

namespace fs = std::filesystem;

void TrainConfig::validate(const ModelConfig& model) const {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw std::invalid_argument("train." + field + ": " + msg);
  };
  if (batch < 1) fail("batch", "must be >= 1");
  if (hr_patch < 1) fail("hr_patch", "must be >= 1");
  if (hr_patch % model.scale != 0)
    fail("hr_patch", std::to_string(hr_patch) + " is not divisible by scale " + std::to_string(model.scale));
  if (hr_patch / model.scale < 8) fail("hr_patch", "LR patches must be at least 8 pixels");
  if (!(lr0 > 0)) fail("lr0", "must be > 0");
  if (decay_period < 1) fail("decay_period", "must be >= 1");
  if (iters_per_epoch < 1) fail("iters_per_epoch", "must be >= 1");
  if (total_epochs < 1) fail("total_epochs", "must be >= 1");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1)) fail("adam_beta1", "must lie in [0, 1)");
  if (!(adam.beta2 >= 0 && adam.beta2 < 1)) fail("adam_beta2", "must lie in [0, 1)");
  if (!(adam.eps > 0)) fail("adam_eps", "must be > 0");
  if (checkpoint_every < 0) fail("checkpoint_every", "must be >= 0");
  if (log_every < 1) fail("log_every", "must be >= 1");
  if (memory_budget_mb < 1) fail("memory_budget_mb", "must be >= 1");
  const std::size_t need = estimate_step_bytes(model, batch, hr_patch) >> 20;
  if (need > static_cast<std::size_t>(memory_budget_mb))
    fail("memory_budget_mb", "a step with batch " + std::to_string(batch) + " and " + std::to_string(hr_patch) +
                                 "px patches needs about " + std::to_string(need) + " MB, budget is " +
                                 std::to_string(memory_budget_mb) + " MB");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  return cfg.lr0 * std::ldexp(1.0, -(epoch / cfg.decay_period));
}

std::size_t estimate_step_bytes(const ModelConfig& model, int batch, int hr_patch) {
  constexpr Index probe = 16;
  Tape<float> tape;
  auto store = init_params<float>(model, 0);
  ParamBinding<float> params(store, &tape);
  auto out = mbmfn_forward(tape.constant(Tensor<float>(Shape{1, model.in_channels, probe, probe})), params, model);
  // Values plus same-sized gradients, scaled from the probe area.
  const double lr_side = static_cast<double>(hr_patch) / model.scale;
  const double per_sample = static_cast<double>(tape.stored_elements()) * (lr_side * lr_side) / (probe * probe);
  return static_cast<std::size_t>(per_sample * batch * 2 * sizeof(float));
}

TrainState initial_state(const TrainConfig& cfg) {
  TrainState s;
  s.lr = learning_rate(cfg, 0);
  s.rng.seed(cfg.seed ^ 0x5DEECE66DULL);
  return s;
}

Batch sample_batch(PatchSampler& sampler, std::mt19937_64& rng, int batch) {
  const int p = sampler.options().hr_patch, q = p / sampler.options().scale;
  Batch b{Tensor<float>(Shape{batch, 1, q, q}), Tensor<float>(Shape{batch, 1, p, p})};
  for (int i = 0; i < batch; ++i) {
    const PatchPair pair = sampler.sample(rng);
    std::copy(pair.lr.data.begin(), pair.lr.data.end(), b.lr.data() + b.lr.offset(i, 0, 0, 0));
    std::copy(pair.hr.data.begin(), pair.hr.data.end(), b.hr.data() + b.hr.offset(i, 0, 0, 0));
  }
  return b;
}

double train_step(const ModelConfig& model, ParamStore<float>& store, AdamState<float>& adam, const Batch& batch,
                  double lr, const AdamConfig& adam_cfg) {
  Tape<float> tape;
  ParamBinding<float> params(store, &tape);
  const auto pred = mbmfn_forward(tape.constant(batch.lr), params, model);
  const auto loss = l1_loss(pred, tape.constant(batch.hr));
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw std::runtime_error("non-finite training loss");
  tape.backward(loss);
  adam_step(store, params.gradients(), adam, lr, adam_cfg);
  return value;
}

namespace {

std::string epoch_name(int epoch) {
  std::ostringstream s;
  s << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
  return s.str();
}

std::string shortest(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

}  // namespace

void train(const ModelConfig& model, ParamStore<float>& store, TrainState& state, PatchSampler& sampler,
           const TrainConfig& cfg, const TrainOutputs& out) {
  model.validate();
  cfg.validate(model);
  if (sampler.options().hr_patch != cfg.hr_patch || sampler.options().scale != model.scale)
    throw std::invalid_argument("sampler patch/scale do not match the training config");
  fs::create_directories(out.dir);

  const fs::path log_path = out.dir / "loss.csv";
  const bool fresh = state.iteration == 0 || !fs::exists(log_path);
  std::ofstream log(log_path, fresh ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error(log_path.string() + ": cannot open loss log");
  if (fresh) log << "epoch,iter,lr,l1\n";

  fs::path last_good;
  for (int epoch = state.epoch; epoch < cfg.total_epochs; ++epoch) {
    state.lr = learning_rate(cfg, epoch);
    double epoch_sum = 0, window_sum = 0;
    int window = 0;
    for (int it = 0; it < cfg.iters_per_epoch; ++it) {
      const Batch batch = sample_batch(sampler, state.rng, cfg.batch);
      double loss;
      try {
        loss = train_step(model, store, state.adam, batch, state.lr, cfg.adam);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", iteration " +
                                 std::to_string(it) + "; last good checkpoint: " +
                                 (last_good.empty() ? std::string("none") : last_good.string()));
      }
      ++state.iteration;
      epoch_sum += loss;
      window_sum += loss;
      if (out.on_step) out.on_step(state.iteration, loss);
      if (++window == cfg.log_every || it + 1 == cfg.iters_per_epoch) {
        log << epoch << ',' << state.iteration << ',' << shortest(state.lr) << ',' << shortest(window_sum / window)
            << '\n';
        window_sum = 0;
        window = 0;
      }
    }
    log.flush();
    state.epoch = epoch + 1;
    state.lr = learning_rate(cfg, state.epoch);
    const double mean = epoch_sum / cfg.iters_per_epoch;
    if (out.progress)
      *out.progress << "epoch " << state.epoch << "/" << cfg.total_epochs << "  lr " << shortest(learning_rate(cfg, epoch))
                    << "  l1 " << shortest(mean) << std::endl;
    if (mean < state.best_loss) {
      state.best_loss = mean;
      save_checkpoint(out.dir / "best.ckpt", model, store, &state);
      last_good = out.dir / "best.ckpt";
    }
    if (cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0) {
      save_checkpoint(out.dir / epoch_name(state.epoch), model, store, &state);
      last_good = out.dir / epoch_name(state.epoch);
    }
  }
  save_checkpoint(out.dir / "final.ckpt", model, store, &state);
}

}  // namespace mbmfn
