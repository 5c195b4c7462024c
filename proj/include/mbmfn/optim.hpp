#pragma once

#include "mbmfn/ops.hpp"
#include "mbmfn/params.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace mbmfn {

/// Mean absolute error over every element; sign subgradient, 0 at ties.
template <typename Scalar>
Var<Scalar> l1_loss(const Var<Scalar>& pred, const Var<Scalar>& target) {
  detail::require(pred.shape() == target.shape(),
                  "l1_loss: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  const auto inv_n = Scalar(1) / static_cast<Scalar>(pred.value().size());
  const typename Tensor<Scalar>::Storage diff = pred.value().array() - target.value().array();
  detail::push_kinks(pred.tape() ? pred.tape() : target.tape(), Tensor<Scalar>(pred.shape(), diff));
  Tensor<Scalar> out = Tensor<Scalar>::scalar(diff.abs().sum() * inv_n);
  return detail::finish<Scalar>(std::move(out), {&pred, &target}, [inv_n](Node<Scalar>& self) {
    auto& p = *self.inputs[0];
    auto& t = *self.inputs[1];
    const Scalar g = self.grad.item() * inv_n;
    const auto sign = (p.value.array() - t.value.array()).sign();
    if (auto* gp = p.grad_slot()) gp->array() += g * sign;
    if (auto* gt = t.grad_slot()) gt->array() -= g * sign;
  });
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

/// First/second moments per parameter name plus the shared step counter.
template <typename Scalar>
struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, Tensor<Scalar>> first;
  std::map<std::string, Tensor<Scalar>> second;

  bool operator==(const AdamState& o) const {
    auto same = [](const auto& a, const auto& b) {
      if (a.size() != b.size()) return false;
      for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib)
        if (ia->first != ib->first || ia->second.shape() != ib->second.shape() ||
            !(ia->second.array() == ib->second.array()).all())
          return false;
      return true;
    };
    return step == o.step && same(first, o.first) && same(second, o.second);
  }
};

/// One bias-corrected Adam update. Each store entry (shared parameters are a
/// single entry) receives exactly one update from its accumulated gradient.
template <typename Scalar>
void adam_step(ParamStore<Scalar>& params, const std::map<std::string, Tensor<Scalar>>& grads,
               AdamState<Scalar>& state, double lr, const AdamConfig& cfg = {}) {
  for (const auto& [name, value] : params.entries()) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("adam: no gradient for parameter '" + name + "'");
    if (it->second.shape() != value.shape())
      throw ShapeError("adam: gradient shape " + it->second.shape().str() + " does not match parameter '" + name +
                       "' " + value.shape().str());
    if (!it->second.all_finite()) throw std::runtime_error("adam: non-finite gradient in parameter '" + name + "'");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  for (auto& [name, value] : params.entries()) {
    const auto& g = grads.at(name).array();
    auto& m = state.first.try_emplace(name, Tensor<Scalar>::zeros(value.shape())).first->second.array();
    auto& v = state.second.try_emplace(name, Tensor<Scalar>::zeros(value.shape())).first->second.array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    const auto step = static_cast<Scalar>(lr / c1);
    const auto root_c2 = static_cast<Scalar>(std::sqrt(c2));
    value.array() -= step * m / (v.sqrt() / root_c2 + static_cast<Scalar>(cfg.eps));
  }
}

}  // namespace mbmfn
