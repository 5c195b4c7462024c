#include "mbmfn/gradcheck.hpp"

#include "mbmfn/blocks.hpp"
#include "mbmfn/optim.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <random>

namespace mbmfn {

double GradCheckReport::max_error() const {
  double worst = 0;
  for (const auto& e : entries) worst = std::max(worst, e.relative_error);
  return worst;
}

std::vector<std::string> GradCheckReport::failures(double tolerance) const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (!(e.relative_error < tolerance)) out.push_back(e.name);
  return out;
}

namespace {

struct Evaluation {
  double loss = 0;
  std::vector<std::uint8_t> kinks;
};

using Evaluator = std::function<Evaluation()>;

Evaluation evaluate_tracked(const std::function<Var<double>(Tape<double>&)>& build) {
  Tape<double> tape;
  tape.set_kink_tracking(true);
  Evaluation e;
  e.loss = build(tape).value().item();
  e.kinks = std::move(tape.kink_signature());
  return e;
}

/// Central differences over every element of `probe`, mutated in place and
/// restored. Steps whose two probes land on a different side of any kink
/// than the base point are retried with the fallback steps.
GradCheckEntry finite_difference(const std::string& name, Tensor<double>& probe, const Tensor<double>& analytic,
                                 const Evaluator& eval, const GradCheckOptions& opts) {
  const Evaluation base = eval();
  std::vector<double> steps{opts.step};
  steps.insert(steps.end(), opts.fallback_steps.begin(), opts.fallback_steps.end());

  GradCheckEntry entry;
  entry.name = name;
  entry.elements = probe.size();
  double diff2 = 0, analytic2 = 0, numeric2 = 0;
  for (Index i = 0; i < probe.size(); ++i) {
    const double orig = probe.array()[i];
    bool accepted = false;
    for (double h : steps) {
      probe.array()[i] = orig + h;
      const Evaluation up = eval();
      probe.array()[i] = orig - h;
      const Evaluation down = eval();
      probe.array()[i] = orig;
      if (up.kinks != base.kinks || down.kinks != base.kinks) continue;
      const double numeric = (up.loss - down.loss) / (2 * h);
      const double a = analytic.array()[i];
      diff2 += (a - numeric) * (a - numeric);
      analytic2 += a * a;
      numeric2 += numeric * numeric;
      accepted = true;
      break;
    }
    if (!accepted) ++entry.kink_skipped;
  }
  const double scale = std::sqrt(std::max(analytic2, numeric2));
  entry.relative_error = scale == 0 ? std::sqrt(diff2) : std::sqrt(diff2) / scale;
  return entry;
}

Tensor<double> uniform_tensor(const Shape& s, std::mt19937_64& rng, double lo, double hi) {
  Tensor<double> t(s);
  for (Index i = 0; i < t.size(); ++i) t.array()[i] = lo + (hi - lo) * uniform01(rng);
  return t;
}

using MultiOp = std::function<Var<double>(const std::vector<Var<double>>&)>;

void check_op(GradCheckReport& report, const std::string& name, std::vector<Tensor<double>> inputs,
              const std::vector<std::string>& input_names, const MultiOp& op, std::mt19937_64& rng,
              const GradCheckOptions& opts) {
  std::vector<Var<double>> probe_vars;
  for (const auto& t : inputs) probe_vars.push_back(Var<double>::constant(t));
  const Tensor<double> weights = uniform_tensor(op(probe_vars).shape(), rng, -1, 1);

  auto weighted = [&](Tape<double>& tape, const std::vector<Var<double>>& vars) {
    return sum(mul(op(vars), tape.constant(weights)));
  };

  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  tape.backward(weighted(tape, vars));

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double> analytic = vars[i].grad().empty() ? Tensor<double>::zeros(inputs[i].shape()) : vars[i].grad();
    Evaluator eval = [&] {
      return evaluate_tracked([&](Tape<double>& t) {
        std::vector<Var<double>> cs;
        for (const auto& in : inputs) cs.push_back(t.constant(in));
        return weighted(t, cs);
      });
    };
    report.entries.push_back(finite_difference(name + "." + input_names[i], inputs[i], analytic, eval, opts));
  }
}

}  // namespace

GradCheckReport check_op_gradients(std::uint64_t seed, const GradCheckOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  GradCheckReport report;
  auto u = [&](const Shape& s, double lo = -1, double hi = 1) { return uniform_tensor(s, rng, lo, hi); };

  check_op(report, "conv3x3", {u({2, 3, 5, 4}), u({4, 3, 3, 3}), u({1, 4, 1, 1})}, {"input", "weight", "bias"},
           [](const auto& v) { return conv2d(v[0], v[1], v[2]); }, rng, opts);
  check_op(report, "conv1x1", {u({2, 3, 4, 4}), u({5, 3, 1, 1}), u({1, 5, 1, 1})}, {"input", "weight", "bias"},
           [](const auto& v) { return conv2d(v[0], v[1], v[2]); }, rng, opts);
  check_op(report, "leaky_relu", {u({2, 2, 4, 4})}, {"input"},
           [](const auto& v) { return leaky_relu(v[0], 0.05); }, rng, opts);
  check_op(report, "sigmoid", {u({2, 2, 4, 4}, -4, 4)}, {"input"}, [](const auto& v) { return sigmoid(v[0]); }, rng,
           opts);
  check_op(report, "channel_mean", {u({2, 3, 4, 4})}, {"input"}, [](const auto& v) { return channel_mean(v[0]); },
           rng, opts);
  check_op(report, "channel_std", {u({2, 3, 4, 4})}, {"input"},
           [](const auto& v) { return channel_std(v[0], kStdEps); }, rng, opts);
  check_op(report, "concat", {u({2, 3, 3, 3}), u({2, 2, 3, 3})}, {"first", "second"},
           [](const auto& v) { return concat_channels({v[0], v[1], v[0]}); }, rng, opts);
  check_op(report, "upsample_nearest", {u({2, 2, 3, 4})}, {"input"},
           [](const auto& v) { return upsample_nearest(v[0], 2); }, rng, opts);
  check_op(report, "upsample_bilinear", {u({2, 2, 3, 4})}, {"input"},
           [](const auto& v) { return upsample_bilinear(v[0], 3); }, rng, opts);
  check_op(report, "pixel_shuffle", {u({1, 8, 3, 3})}, {"input"}, [](const auto& v) { return pixel_shuffle(v[0], 2); },
           rng, opts);
  check_op(report, "channel_scale", {u({2, 3, 3, 3}), u({2, 3, 1, 1})}, {"input", "scale"},
           [](const auto& v) { return channel_scale(v[0], v[1]); }, rng, opts);
  check_op(report, "l1_loss", {u({2, 1, 4, 4}), u({2, 1, 4, 4})}, {"pred", "target"},
           [](const auto& v) { return l1_loss(v[0], v[1]); }, rng, opts);

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

GradCheckReport check_model_gradients(const ModelConfig& cfg, Index height, Index width, std::uint64_t seed,
                                      const GradCheckOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  ParamStore<double> store = init_params<double>(cfg, seed);
  for (auto& [name, t] : store.entries())
    if ((t.array() == 0).all()) t = uniform_tensor(t.shape(), rng, -0.1, 0.1);

  const Tensor<double> image = uniform_tensor(Shape{1, cfg.in_channels, height, width}, rng, 0, 1);
  // Keep every residual at least 0.05 away from zero so L1 is smooth near the
  // evaluation point.
  Tensor<double> target = run_model(cfg, store, image);
  for (Index i = 0; i < target.size(); ++i) {
    const double offset = 0.05 + 0.45 * uniform01(rng);
    target.array()[i] += uniform01(rng) < 0.5 ? -offset : offset;
  }

  Tape<double> tape;
  ParamBinding<double> params(store, &tape, true);
  tape.backward(l1_loss(mbmfn_forward(tape.constant(image), params, cfg), tape.constant(target)));
  const auto grads = params.gradients();

  Evaluator eval = [&] {
    return evaluate_tracked([&](Tape<double>& t) {
      ParamBinding<double> frozen(store, &t, false);
      return l1_loss(mbmfn_forward(t.constant(image), frozen, cfg), t.constant(target));
    });
  };
  GradCheckReport report;
  for (auto& [name, t] : store.entries()) report.entries.push_back(finite_difference(name, t, grads.at(name), eval, opts));
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace mbmfn
