#include "doctest.h"

#include "mbmfn/blocks.hpp"
#include "mbmfn/checkpoint.hpp"
#include "mbmfn/run_config.hpp"
#include "mbmfn/training.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace mbmfn;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.num_blocks = 1;
  cfg.trunk_channels = 8;
  cfg.distill_channels = 6;
  return cfg;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.batch = 2;
  t.hr_patch = 32;
  t.iters_per_epoch = 4;
  t.total_epochs = 2;
  t.log_every = 2;
  t.checkpoint_every = 1;
  t.seed = 5;
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

DatasetManifest one_image(const fs::path& dir, int size = 64) {
  save_image(testing::synthetic_photo(size, size, 77), dir / "train.png");
  DatasetManifest m;
  m.root = dir;
  m.entries.push_back({dir / "train.png", std::nullopt});
  return m;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("l1 loss values and gradient") {
  std::mt19937_64 rng(1);
  const auto a = testing::random_tensor(Shape{2, 3, 4, 5}, rng);
  Tensor<double> shifted = a;
  shifted.array() += 0.5;
  CHECK(l1_loss(Var<double>::constant(a), Var<double>::constant(a)).value().item() == 0.0);
  CHECK(l1_loss(Var<double>::constant(shifted), Var<double>::constant(a)).value().item() ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(l1_loss(Var<double>::constant(a), Var<double>::constant(Tensor<double>(Shape{1, 3, 4, 5}))),
                  ShapeError);

  const auto target = testing::random_tensor(a.shape(), rng);
  Tape<double> tape;
  auto p = tape.variable(a);
  tape.backward(l1_loss(p, tape.constant(target)));
  const auto numeric = testing::numeric_gradient(
      [&](const Tensor<double>& x) {
        return l1_loss(Var<double>::constant(x), Var<double>::constant(target)).value().item();
      },
      a);
  CHECK(testing::relative_error(p.grad(), numeric) < 1e-8);
  for (Index i = 0; i < a.size(); ++i)
    CHECK(p.grad().data()[i] == doctest::Approx((a.data()[i] > target.data()[i] ? 1.0 : -1.0) / a.size()));
}

TEST_CASE("adam matches the hand recurrence") {
  ParamStore<double> store;
  store.add("x", Tensor<double>::scalar(0.3));
  AdamState<double> state;
  adam_step(store, {{"x", Tensor<double>::scalar(0.0)}}, state, 0.1);
  CHECK(store.at("x").item() == 0.3);

  ParamStore<double> one;
  one.add("x", Tensor<double>::scalar(0.0));
  AdamState<double> s1;
  adam_step(one, {{"x", Tensor<double>::scalar(1.0)}}, s1, 1e-3);
  CHECK(one.at("x").item() == doctest::Approx(-1e-3).epsilon(1e-6));

  // Three steps with changing gradients against the textbook recurrence.
  double x = 0.7, m = 0, v = 0;
  ParamStore<double> p;
  p.add("x", Tensor<double>::scalar(x));
  AdamState<double> st;
  const double grads[] = {0.4, -1.3, 2.2};
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    adam_step(p, {{"x", Tensor<double>::scalar(g)}}, st, 0.01);
    CHECK(p.at("x").item() == doctest::Approx(x).epsilon(1e-12));
  }

  ParamStore<double> bowl;
  bowl.add("x", Tensor<double>::scalar(1.0));
  AdamState<double> sb;
  for (int i = 0; i < 500; ++i) adam_step(bowl, {{"x", Tensor<double>::scalar(2 * bowl.at("x").item())}}, sb, 0.01);
  const double xf = bowl.at("x").item();
  CHECK(xf * xf < 1e-3);
}

TEST_CASE("adam rejects bad gradients by name") {
  ParamStore<float> store;
  store.add("body.0.fuse.weight", Tensor<float>::zeros(Shape{1, 1, 2, 2}));
  AdamState<float> st;
  Tensor<float> g = Tensor<float>::zeros(Shape{1, 1, 2, 2});
  g.data()[1] = std::nanf("");
  CHECK(error_of([&] { adam_step(store, {{"body.0.fuse.weight", g}}, st, 1e-3); }).find("body.0.fuse.weight") !=
        std::string::npos);
  CHECK(st.step == 0);
  CHECK(error_of([&] { adam_step(store, {}, st, 1e-3); }).find("body.0.fuse.weight") != std::string::npos);
}

TEST_CASE("shared parameter gets a single update from the summed gradient") {
  ParamStore<double> store;
  store.add("w", Tensor<double>::scalar(0.5));
  Tape<double> tape;
  ParamBinding<double> params(store, &tape);
  const auto x = tape.constant(Tensor<double>::scalar(3.0));
  const auto loss = add(mul(params("w"), x), mul(params("w"), x));
  tape.backward(loss);
  const auto grads = params.gradients();
  CHECK(grads.at("w").item() == 6.0);
  AdamState<double> st;
  adam_step(store, grads, st, 0.01);
  CHECK(st.step == 1);
  CHECK(store.at("w").item() == doctest::Approx(0.49).epsilon(1e-9));
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  for (int e : {0, 1, 199}) CHECK(learning_rate(cfg, e) == 2e-4);
  for (int e : {200, 399}) CHECK(learning_rate(cfg, e) == 1e-4);
  CHECK(learning_rate(cfg, 400) == 5e-5);
  for (int e = 0; e < 1000; e += 37) CHECK(learning_rate(cfg, e) == cfg.lr0 * std::pow(0.5, std::floor(e / 200.0)));
}

TEST_CASE("training config validation") {
  const ModelConfig model;
  CHECK_NOTHROW(TrainConfig{}.validate(model));
  TrainConfig small_budget;
  small_budget.memory_budget_mb = 64;
  CHECK(error_of([&] { small_budget.validate(model); }).find("train.memory_budget_mb") != std::string::npos);
  TrainConfig odd;
  odd.hr_patch = 190;
  CHECK(error_of([&] { odd.validate(model); }).find("train.hr_patch") != std::string::npos);
  // The estimate grows with batch and patch area.
  CHECK(estimate_step_bytes(model, 2, 96) > estimate_step_bytes(model, 1, 96));
  CHECK(estimate_step_bytes(model, 1, 192) == doctest::Approx(4.0 * estimate_step_bytes(model, 1, 96)).epsilon(1e-3));
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = testing::scratch_dir("ckpt");
  const auto cfg = tiny_model();
  auto store = init_params<float>(cfg, 3);
  for (auto& [name, t] : store.entries())
    for (Index i = 0; i < t.size(); ++i) t.data()[i] += 0.01f * static_cast<float>(i % 7);
  TrainState state = initial_state(tiny_train());
  state.epoch = 3;
  state.iteration = 12;
  state.best_loss = 0.125;
  state.rng.discard(17);
  state.adam.step = 12;
  for (const auto& [name, t] : store.entries()) {
    state.adam.first.emplace(name, t);
    state.adam.second.emplace(name, Tensor<float>::constant(t.shape(), 0.25f));
  }

  save_checkpoint(dir / "a.ckpt", cfg, store, &state);
  const auto ck = load_checkpoint(dir / "a.ckpt");
  CHECK(ck.model == cfg);
  CHECK(ck.params == store);
  REQUIRE(ck.state);
  CHECK(*ck.state == state);

  std::mt19937_64 rng(4);
  const auto input = testing::random_tensor(Shape{1, 1, 12, 12}, rng, 0, 1).cast<float>();
  const auto before = run_model(cfg, store, input);
  const auto after = run_model(ck.model, ck.params, input);
  CHECK((before.array() == after.array()).all());

  save_checkpoint(dir / "b.ckpt", cfg, store);
  CHECK_FALSE(load_checkpoint(dir / "b.ckpt").state);
}

TEST_CASE("checkpoint corruption is rejected") {
  const auto cfg = tiny_model();
  const auto store = init_params<float>(cfg, 3);
  const auto good = encode_checkpoint(cfg, store);
  CHECK_NOTHROW(decode_checkpoint(good));

  auto tampered = good;
  tampered[good.size() / 2] ^= 0x01;
  CHECK(error_of([&] { decode_checkpoint(tampered); }).find("checksum") != std::string::npos);

  for (std::size_t cut : {std::size_t{10}, good.size() / 3, good.size() - 2}) {
    std::vector<unsigned char> truncated(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
    const auto msg = error_of([&] { decode_checkpoint(truncated); });
    CHECK(msg.find("truncated at offset") != std::string::npos);
  }

  auto magic = good;
  magic[0] = 'X';
  CHECK(error_of([&] { decode_checkpoint(magic); }).find("magic") != std::string::npos);
  auto version = good;
  version[4] = 9;
  CHECK(error_of([&] { decode_checkpoint(version); }).find("version 9") != std::string::npos);

  // A parameter set that does not match the stored config.
  ParamStore<float> wrong = store;
  wrong.add("extra", Tensor<float>::zeros(Shape{1, 1, 1, 1}));
  CHECK(error_of([&] { decode_checkpoint(encode_checkpoint(cfg, wrong)); }).find("tensors") != std::string::npos);
}

TEST_CASE("shared reconstruction weights are stored once") {
  ModelConfig shared;
  ModelConfig split = shared;
  split.recon_weight_sharing = false;
  const auto a = encode_checkpoint(shared, init_params<float>(shared, 1));
  const auto b = encode_checkpoint(split, init_params<float>(split, 1));
  // Each extra tensor costs its record; the config text differs by one
  // character ("true" vs "false").
  std::size_t extra = 0;
  for (const auto& spec : param_layout(split))
    if (spec.name.rfind("recon.step1", 0) == 0)
      extra += 4 + spec.name.size() + 1 + 16 + 4 * static_cast<std::size_t>(spec.shape.numel());
  CHECK(extra > 0);
  CHECK(b.size() - a.size() == extra + 1);
}

TEST_CASE("seeded training is reproducible byte for byte") {
  const auto root = testing::scratch_dir("determinism");
  const auto manifest = one_image(root);
  auto run = [&](const std::string& name) {
    const auto model = tiny_model();
    const auto cfg = tiny_train();
    auto store = init_params<float>(model, cfg.seed);
    auto state = initial_state(cfg);
    PatchSampler sampler(manifest, {.scale = model.scale, .hr_patch = cfg.hr_patch});
    train(model, store, state, sampler, cfg, {root / name, nullptr, {}});
    CHECK(state.epoch == 2);
    CHECK(state.iteration == 8);
    return root / name;
  };
  const auto a = run("a"), b = run("b");
  for (const char* f : {"loss.csv", "final.ckpt", "epoch_0001.ckpt", "best.ckpt"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto log = slurp(a / "loss.csv");
  CHECK(log.rfind("epoch,iter,lr,l1\n", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 5);
  const auto ck = load_checkpoint(a / "final.ckpt");
  REQUIRE(ck.state);
  CHECK(ck.state->epoch == 2);
  CHECK(ck.state->lr == learning_rate(tiny_train(), 2));
  for (const auto& [name, t] : ck.params.entries()) CHECK(ck.state->adam.first.at(name).shape() == t.shape());
}

TEST_CASE("loss on a fixed batch falls at every early step") {
  const auto root = testing::scratch_dir("fixed_batch");
  ModelConfig model = tiny_model();
  model.num_blocks = 2;
  model.trunk_channels = 16;
  model.distill_channels = 12;
  PatchSampler sampler(one_image(root, 96), {.scale = 4, .hr_patch = 48});
  std::mt19937_64 rng(2);
  const auto batch = sample_batch(sampler, rng, 4);
  auto store = init_params<float>(model, 2);
  AdamState<float> adam;
  double last = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 20; ++i) {
    const double loss = train_step(model, store, adam, batch, 2e-4, {});
    CHECK(loss < last);
    last = loss;
  }
}

TEST_CASE("non-finite loss aborts training") {
  const auto root = testing::scratch_dir("nan");
  const auto model = tiny_model();
  const auto cfg = tiny_train();
  auto store = init_params<float>(model, 1);
  store.at("tail.weight").data()[0] = std::nanf("");
  auto state = initial_state(cfg);
  PatchSampler sampler(one_image(root), {.scale = 4, .hr_patch = 32});
  const auto before = store;
  const auto msg = error_of([&] { train(model, store, state, sampler, cfg, {root / "out", nullptr, {}}); });
  CHECK(msg.find("non-finite") != std::string::npos);
  CHECK(msg.find("epoch 0") != std::string::npos);
  CHECK_FALSE(fs::exists(root / "out" / "final.ckpt"));
}

TEST_CASE("run config text round trips") {
  RunConfig cfg;
  cfg.model.attention = AttentionKind::CCA;
  cfg.model.leaky_slope = 0.1;
  cfg.train.lr0 = 3.3e-4;
  cfg.train.seed = 123456789012345ULL;
  cfg.data.eval_manifests = {"a.txt", "b.txt"};
  const auto text = serialize(cfg);
  std::istringstream in(text);
  const auto back = parse_run_config(in);
  CHECK(back == cfg);
  CHECK(serialize(back) == text);

  std::istringstream defaults(serialize(RunConfig{}));
  CHECK(parse_run_config(defaults) == RunConfig{});
  CHECK(parse_model_config(serialize(cfg.model)) == cfg.model);

  std::istringstream typo("model.scale = 4\ntrain.bacth = 3\n");
  const auto msg = error_of([&] { parse_run_config(typo, "x.cfg"); });
  CHECK(msg.find("x.cfg:2") != std::string::npos);
  CHECK(msg.find("train.bacth") != std::string::npos);

  RunConfig o;
  apply_override(o, "model.upsampler=SubPixel");
  CHECK(o.model.upsampler == Upsampler::SubPixel);
  CHECK(error_of([&] { apply_override(o, "train.batch=abc"); }).find("train.batch") != std::string::npos);
  CHECK(error_of([&] { apply_override(o, "model.attention=XX"); }).find("model.attention") != std::string::npos);
  CHECK_THROWS_AS(apply_override(o, "novalue"), ConfigError);
}
