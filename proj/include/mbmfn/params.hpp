#pragma once

#include "mbmfn/autodiff.hpp"
#include "mbmfn/config.hpp"
#include "mbmfn/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mbmfn {

/// He-uniform init. The gain depends on what feeds the layer: 1 for linear
/// inputs, sqrt(2 / (1 + slope^2)) for inputs that passed a (leaky) relu.
enum class ParamInit { KaimingLinear, KaimingLeaky, Zero };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamInit init = ParamInit::KaimingLinear;
};

/// Every parameter of a model, in the deterministic order used for
/// initialization, checkpoints and reports. Weight-shared reconstruction
/// steps resolve to a single set of names.
std::vector<ParamSpec> param_layout(const ModelConfig& cfg);

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Ordered, uniquely named parameter tensors.
template <typename Scalar>
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor<Scalar>>;

  void add(std::string name, Tensor<Scalar> tensor) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(tensor));
  }

  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

  const Tensor<Scalar>& at(std::string_view name) const { return entries_[locate(name)].second; }
  Tensor<Scalar>& at(std::string_view name) { return entries_[locate(name)].second; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& [name, t] : entries_) out.add(name, t.template cast<Other>());
    return out;
  }

  bool operator==(const ParamStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = other.entries_[i];
      if (a.first != b.first || a.second.shape() != b.second.shape() || !(a.second.array() == b.second.array()).all())
        return false;
    }
    return true;
  }

 private:
  std::size_t locate(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named '" + std::string(name) + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// He-uniform conv weights, zero biases, zero attention weights where the
/// layout says so.
template <typename Scalar>
ParamStore<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const double leaky_gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
  ParamStore<Scalar> store;
  for (const auto& spec : param_layout(cfg)) {
    Tensor<Scalar> t(spec.shape);
    if (spec.init != ParamInit::Zero) {
      const double gain = spec.init == ParamInit::KaimingLeaky ? leaky_gain : 1.0;
      const double fan_in = static_cast<double>(spec.shape.c * spec.shape.h * spec.shape.w);
      const double bound = gain * std::sqrt(3.0 / fan_in);
      for (Index i = 0; i < t.size(); ++i) t.array()[i] = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * bound);
    }
    store.add(spec.name, std::move(t));
  }
  return store;
}

template <typename Scalar>
Index count_params(const ParamStore<Scalar>& store) {
  Index total = 0;
  for (const auto& [name, t] : store.entries()) total += t.size();
  return total;
}

/// Sum of parameter sizes whose names start with `prefix`.
template <typename Scalar>
Index count_params(const ParamStore<Scalar>& store, std::string_view prefix) {
  Index total = 0;
  for (const auto& [name, t] : store.entries())
    if (std::string_view(name).substr(0, prefix.size()) == prefix) total += t.size();
  return total;
}

/// Exposes store entries to one forward pass. Each name maps to a single
/// tape leaf, so repeated uses (weight sharing) accumulate one gradient.
template <typename Scalar>
class ParamBinding {
 public:
  /// With a null tape the parameters are untracked constants (inference).
  ParamBinding(const ParamStore<Scalar>& store, Tape<Scalar>* tape, bool requires_grad = true)
      : store_(&store), tape_(tape), requires_grad_(requires_grad) {}

  Var<Scalar> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Tensor<Scalar>& t = store_->at(name);
    Var<Scalar> v;
    if (!tape_)
      v = Var<Scalar>::constant(t);
    else if (requires_grad_)
      v = tape_->variable(t);
    else
      v = tape_->constant(t);
    bound_.emplace(name, v);
    return v;
  }

  std::set<std::string> used_names() const {
    std::set<std::string> names;
    for (const auto& [name, v] : bound_) names.insert(name);
    return names;
  }

  /// Gradient per parameter name after backward; zeros for untouched entries.
  std::map<std::string, Tensor<Scalar>> gradients() const {
    std::map<std::string, Tensor<Scalar>> out;
    for (const auto& [name, t] : store_->entries()) {
      auto it = bound_.find(name);
      if (it != bound_.end() && !it->second.grad().empty())
        out.emplace(name, it->second.grad());
      else
        out.emplace(name, Tensor<Scalar>::zeros(t.shape()));
    }
    return out;
  }

 private:
  const ParamStore<Scalar>* store_;
  Tape<Scalar>* tape_;
  bool requires_grad_;
  std::map<std::string, Var<Scalar>> bound_;
};

}  // namespace mbmfn
