#pragma once

// Test-only oracles: central finite differences and brute-force reference
// kernels. Nothing here calls into the backward pass under test.

#include "mbmfn/tensor.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace mbmfn::testing {

inline Tensor<double> random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(s);
  for (Index i = 0; i < t.size(); ++i) t.array()[i] = dist(rng);
  return t;
}

/// Central-difference gradient of a scalar function of one tensor.
inline Tensor<double> numeric_gradient(const std::function<double(const Tensor<double>&)>& f, Tensor<double> x,
                                       double step = 1e-5) {
  Tensor<double> grad(x.shape());
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = x.array()[i];
    x.array()[i] = orig + step;
    const double up = f(x);
    x.array()[i] = orig - step;
    const double down = f(x);
    x.array()[i] = orig;
    grad.array()[i] = (up - down) / (2 * step);
  }
  return grad;
}

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(const Tensor<double>& a, const Tensor<double>& b) {
  const double diff = (a.array() - b.array()).matrix().norm();
  const double scale = std::max(a.array().matrix().norm(), b.array().matrix().norm());
  return scale == 0 ? diff : diff / scale;
}

/// Direct six-loop same-size cross-correlation.
template <typename Scalar>
Tensor<Scalar> naive_conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b) {
  const Index k = w.h(), pad = (k - 1) / 2;
  Tensor<Scalar> out(Shape{x.n(), w.n(), x.h(), x.w()});
  for (Index n = 0; n < x.n(); ++n)
    for (Index co = 0; co < w.n(); ++co)
      for (Index y = 0; y < x.h(); ++y)
        for (Index xx = 0; xx < x.w(); ++xx) {
          Scalar acc = b(0, co, 0, 0);
          for (Index ci = 0; ci < w.c(); ++ci)
            for (Index ky = 0; ky < k; ++ky)
              for (Index kx = 0; kx < k; ++kx) {
                const Index sy = y + ky - pad, sx = xx + kx - pad;
                if (sy < 0 || sy >= x.h() || sx < 0 || sx >= x.w()) continue;
                acc += w(co, ci, ky, kx) * x(n, ci, sy, sx);
              }
          out(n, co, y, xx) = acc;
        }
  return out;
}

}  // namespace mbmfn::testing
