#pragma once

// Differentiable tensor ops. Each takes and returns Var handles; results are
// recorded on the inputs' tape when any input requires a gradient.

#include "mbmfn/autodiff.hpp"
#include "mbmfn/conv_kernels.hpp"

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mbmfn {

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <typename Scalar>
using VecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
template <typename Scalar>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

template <typename Scalar>
void push_kinks(Tape<Scalar>* tape, const Tensor<Scalar>& x, Scalar at = Scalar(0)) {
  if (!tape || !tape->kink_tracking()) return;
  auto& sig = tape->kink_signature();
  for (Index i = 0; i < x.size(); ++i) sig.push_back(x.array()[i] > at ? 1 : 0);
}

/// Separable resampling table for one axis: out[i] = a[i0] + t * (a[i1] - a[i0]).
struct LerpAxis {
  std::vector<Index> i0, i1;
  std::vector<double> t;
};

inline LerpAxis bilinear_axis(Index in, Index factor) {
  LerpAxis ax;
  const Index out = in * factor;
  ax.i0.resize(out);
  ax.i1.resize(out);
  ax.t.resize(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0) src = 0;
    Index lo = static_cast<Index>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    ax.i0[o] = lo;
    ax.i1[o] = std::min<Index>(lo + 1, in - 1);
    ax.t[o] = src - static_cast<double>(lo);
  }
  return ax;
}

}  // namespace detail

/// Stride-1, same-size cross-correlation with zero padding (k - 1) / 2.
/// weight: (c_out, c_in, k, k); bias: (1, c_out, 1, 1).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const Index c_out = ws.n, c_in = ws.c, k = ws.h;
  detail::require(ws.h == ws.w, "conv2d: kernel must be square, got " + ws.str());
  detail::require(k % 2 == 1, "conv2d: kernel size must be odd, got " + std::to_string(k));
  detail::require(xs.c == c_in, "conv2d: input has " + std::to_string(xs.c) + " channels, weight " + ws.str() +
                                    " expects " + std::to_string(c_in));
  detail::require(bias.shape() == Shape{1, c_out, 1, 1},
                  "conv2d: bias shape " + bias.shape().str() + " does not match " + std::to_string(c_out) +
                      " output channels");

  const Index hw = xs.plane();
  const Index patch = c_in * k * k;
  Tensor<Scalar> out(Shape{xs.n, c_out, xs.h, xs.w});
  Eigen::Map<const RowMatrix<Scalar>> W(weight.value().data(), c_out, patch);
  detail::ConstVecMap<Scalar> b(bias.value().data(), c_out);
  RowMatrix<Scalar> cols;
  if (k > 1) cols.resize(patch, hw);
  for (Index n = 0; n < xs.n; ++n) {
    auto y = out.sample_matrix(n);
    if (k == 1) {
      y.noalias() = W * x.value().sample_matrix(n);
    } else {
      kernels::im2col(x.value().data() + n * c_in * hw, c_in, xs.h, xs.w, k, cols.data());
      y.noalias() = W * cols;
    }
    y.colwise() += b;
  }

  return detail::finish<Scalar>(std::move(out), {&x, &weight, &bias}, [=](Node<Scalar>& self) {
    auto& xn = *self.inputs[0];
    auto& wn = *self.inputs[1];
    auto& bn = *self.inputs[2];
    Tensor<Scalar>* gx = xn.grad_slot();
    Tensor<Scalar>* gw = wn.grad_slot();
    Tensor<Scalar>* gb = bn.grad_slot();
    Eigen::Map<const RowMatrix<Scalar>> Wm(wn.value.data(), c_out, patch);
    RowMatrix<Scalar> col_buf;
    if (k > 1) col_buf.resize(patch, hw);
    for (Index n = 0; n < xs.n; ++n) {
      auto dy = self.grad.sample_matrix(n);
      if (gb) detail::VecMap<Scalar>(gb->data(), c_out) += dy.rowwise().sum();
      if (gw) {
        Eigen::Map<RowMatrix<Scalar>> dW(gw->data(), c_out, patch);
        if (k == 1) {
          dW.noalias() += dy * xn.value.sample_matrix(n).transpose();
        } else {
          kernels::im2col(xn.value.data() + n * c_in * hw, c_in, xs.h, xs.w, k, col_buf.data());
          dW.noalias() += dy * col_buf.transpose();
        }
      }
      if (gx) {
        if (k == 1) {
          gx->sample_matrix(n).noalias() += Wm.transpose() * dy;
        } else {
          col_buf.noalias() = Wm.transpose() * dy;
          kernels::col2im_add(col_buf.data(), c_in, xs.h, xs.w, k, gx->data() + n * c_in * hw);
        }
      }
    }
  });
}

/// max(x, slope * x) for slope in [0, 1); slope 0 gives relu.
template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
  detail::require(slope >= 0 && slope < 1, "leaky_relu: slope must lie in [0, 1)");
  Tensor<Scalar> out(x.shape());
  out.array() = (x.value().array() > Scalar(0)).select(x.value().array(), slope * x.value().array());
  detail::push_kinks(x.tape(), x.value());
  return detail::finish<Scalar>(std::move(out), {&x}, [slope](Node<Scalar>& self) {
    auto& in = *self.inputs[0];
    if (auto* g = in.grad_slot())
      g->array() += (in.value.array() > Scalar(0)).select(self.grad.array(), slope * self.grad.array());
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  return leaky_relu(x, Scalar(0));
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  const auto& in = x.value().array();
  for (Index i = 0; i < in.size(); ++i) {
    const Scalar v = in[i];
    if (v >= 0) {
      out.array()[i] = Scalar(1) / (Scalar(1) + std::exp(-v));
    } else {
      const Scalar e = std::exp(v);
      out.array()[i] = e / (Scalar(1) + e);
    }
  }
  return detail::finish<Scalar>(std::move(out), {&x}, [](Node<Scalar>& self) {
    if (auto* g = self.inputs[0]->grad_slot())
      g->array() += self.grad.array() * self.value.array() * (Scalar(1) - self.value.array());
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.shape() == b.shape(), "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<Scalar> out(a.shape(), a.value().array() + b.value().array());
  return detail::finish<Scalar>(std::move(out), {&a, &b}, [](Node<Scalar>& self) {
    for (auto& in : self.inputs)
      if (auto* g = in->grad_slot()) g->array() += self.grad.array();
  });
}

/// Elementwise product of equally shaped tensors.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.shape() == b.shape(), "mul: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<Scalar> out(a.shape(), a.value().array() * b.value().array());
  return detail::finish<Scalar>(std::move(out), {&a, &b}, [](Node<Scalar>& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    if (auto* g = an.grad_slot()) g->array() += self.grad.array() * bn.value.array();
    if (auto* g = bn.grad_slot()) g->array() += self.grad.array() * an.value.array();
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(std::span<const Var<Scalar>> parts) {
  detail::require(!parts.empty(), "concat_channels: no inputs");
  const Shape first = parts.front().shape();
  Index channels = 0;
  Tape<Scalar>* tape = nullptr;
  bool needs_grad = false;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    detail::require(s.n == first.n && s.h == first.h && s.w == first.w,
                    "concat_channels: shape mismatch " + s.str() + " vs " + first.str());
    channels += s.c;
    if (p.tape()) {
      if (tape && tape != p.tape()) throw std::invalid_argument("op inputs live on different tapes");
      tape = p.tape();
    }
    needs_grad = needs_grad || p.requires_grad();
  }
  const Index hw = first.plane();
  Tensor<Scalar> out(Shape{first.n, channels, first.h, first.w});
  for (Index n = 0; n < first.n; ++n) {
    Index c0 = 0;
    for (const auto& p : parts) {
      const Index pc = p.shape().c;
      std::copy_n(p.value().data() + n * pc * hw, pc * hw, out.data() + (n * channels + c0) * hw);
      c0 += pc;
    }
  }
  if (!tape || !needs_grad) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(out);
    return Var<Scalar>(std::move(node), tape);
  }
  std::vector<std::shared_ptr<Node<Scalar>>> inputs;
  for (const auto& p : parts) inputs.push_back(p.node());
  return tape->record(std::move(out), std::move(inputs), [channels, hw](Node<Scalar>& self) {
    const Index batch = self.value.n();
    Index c0 = 0;
    for (auto& in : self.inputs) {
      const Index pc = in->value.c();
      if (auto* g = in->grad_slot()) {
        for (Index n = 0; n < batch; ++n) {
          const Scalar* src = self.grad.data() + (n * channels + c0) * hw;
          Scalar* dst = g->data() + n * pc * hw;
          for (Index i = 0; i < pc * hw; ++i) dst[i] += src[i];
        }
      }
      c0 += pc;
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(std::initializer_list<Var<Scalar>> parts) {
  std::vector<Var<Scalar>> v(parts);
  return concat_channels<Scalar>(std::span<const Var<Scalar>>(v));
}

template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, Index begin, Index count) {
  const Shape s = x.shape();
  detail::require(begin >= 0 && count >= 1 && begin + count <= s.c, "slice_channels: range out of bounds");
  const Index hw = s.plane();
  Tensor<Scalar> out(Shape{s.n, count, s.h, s.w});
  for (Index n = 0; n < s.n; ++n)
    std::copy_n(x.value().data() + (n * s.c + begin) * hw, count * hw, out.data() + n * count * hw);
  return detail::finish<Scalar>(std::move(out), {&x}, [=](Node<Scalar>& self) {
    if (auto* g = self.inputs[0]->grad_slot()) {
      for (Index n = 0; n < s.n; ++n) {
        const Scalar* src = self.grad.data() + n * count * hw;
        Scalar* dst = g->data() + (n * s.c + begin) * hw;
        for (Index i = 0; i < count * hw; ++i) dst[i] += src[i];
      }
    }
  });
}

/// Per-sample, per-channel broadcast multiply; scale has shape (n, c, 1, 1).
template <typename Scalar>
Var<Scalar> channel_scale(const Var<Scalar>& x, const Var<Scalar>& scale) {
  const Shape s = x.shape();
  detail::require(scale.shape() == Shape{s.n, s.c, 1, 1},
                  "channel_scale: scale shape " + scale.shape().str() + " does not match input " + s.str());
  Tensor<Scalar> out(s);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c)
      out.plane(n, c) = x.value().plane(n, c) * scale.value()(n, c, 0, 0);
  return detail::finish<Scalar>(std::move(out), {&x, &scale}, [s](Node<Scalar>& self) {
    auto& xn = *self.inputs[0];
    auto& sn = *self.inputs[1];
    Tensor<Scalar>* gx = xn.grad_slot();
    Tensor<Scalar>* gs = sn.grad_slot();
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < s.c; ++c) {
        auto g = self.grad.plane(n, c);
        if (gx) gx->plane(n, c) += g * sn.value(n, c, 0, 0);
        if (gs) (*gs)(n, c, 0, 0) += g.cwiseProduct(xn.value.plane(n, c)).sum();
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> upsample_nearest(const Var<Scalar>& x, Index factor) {
  detail::require(factor >= 2, "upsample_nearest: factor must be >= 2");
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};
  Tensor<Scalar> out(os);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) {
      auto src = x.value().plane(n, c);
      auto dst = out.plane(n, c);
      for (Index y = 0; y < os.h; ++y)
        for (Index xx = 0; xx < os.w; ++xx) dst(y, xx) = src(y / factor, xx / factor);
    }
  return detail::finish<Scalar>(std::move(out), {&x}, [s, os, factor](Node<Scalar>& self) {
    if (auto* g = self.inputs[0]->grad_slot()) {
      for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c) {
          auto src = self.grad.plane(n, c);
          auto dst = g->plane(n, c);
          for (Index y = 0; y < os.h; ++y)
            for (Index xx = 0; xx < os.w; ++xx) dst(y / factor, xx / factor) += src(y, xx);
        }
    }
  });
}

/// Bilinear upsampling with half-pixel centres and edge clamping:
/// source coordinate (dst + 0.5) / factor - 0.5.
template <typename Scalar>
Var<Scalar> upsample_bilinear(const Var<Scalar>& x, Index factor) {
  detail::require(factor >= 2, "upsample_bilinear: factor must be >= 2");
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};
  const auto ay = detail::bilinear_axis(s.h, factor);
  const auto ax = detail::bilinear_axis(s.w, factor);
  Tensor<Scalar> out(os);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) {
      auto src = x.value().plane(n, c);
      auto dst = out.plane(n, c);
      for (Index y = 0; y < os.h; ++y) {
        const Scalar ty = static_cast<Scalar>(ay.t[y]);
        for (Index xx = 0; xx < os.w; ++xx) {
          const Scalar tx = static_cast<Scalar>(ax.t[xx]);
          const Scalar a = src(ay.i0[y], ax.i0[xx]), b = src(ay.i0[y], ax.i1[xx]);
          const Scalar cc = src(ay.i1[y], ax.i0[xx]), d = src(ay.i1[y], ax.i1[xx]);
          const Scalar top = a + tx * (b - a);
          const Scalar bottom = cc + tx * (d - cc);
          dst(y, xx) = top + ty * (bottom - top);
        }
      }
    }
  return detail::finish<Scalar>(std::move(out), {&x}, [s, os, ay, ax](Node<Scalar>& self) {
    if (auto* g = self.inputs[0]->grad_slot()) {
      for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c) {
          auto src = self.grad.plane(n, c);
          auto dst = g->plane(n, c);
          for (Index y = 0; y < os.h; ++y) {
            const Scalar ty = static_cast<Scalar>(ay.t[y]);
            for (Index xx = 0; xx < os.w; ++xx) {
              const Scalar tx = static_cast<Scalar>(ax.t[xx]);
              const Scalar go = src(y, xx);
              const Scalar g_top = (Scalar(1) - ty) * go;
              const Scalar g_bottom = ty * go;
              dst(ay.i0[y], ax.i0[xx]) += (Scalar(1) - tx) * g_top;
              dst(ay.i0[y], ax.i1[xx]) += tx * g_top;
              dst(ay.i1[y], ax.i0[xx]) += (Scalar(1) - tx) * g_bottom;
              dst(ay.i1[y], ax.i1[xx]) += tx * g_bottom;
            }
          }
        }
    }
  });
}

/// Sub-pixel rearrangement: (n, c * r^2, h, w) -> (n, c, h * r, w * r),
/// channel c * r^2 + i * r + j lands at offset (i, j) of each r x r cell.
template <typename Scalar>
Var<Scalar> pixel_shuffle(const Var<Scalar>& x, Index r) {
  const Shape s = x.shape();
  detail::require(r >= 2 && s.c % (r * r) == 0, "pixel_shuffle: channels not divisible by factor^2");
  const Shape os{s.n, s.c / (r * r), s.h * r, s.w * r};
  Tensor<Scalar> out(os);
  auto for_each = [=](auto&& fn) {
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < os.c; ++c)
        for (Index i = 0; i < r; ++i)
          for (Index j = 0; j < r; ++j)
            for (Index y = 0; y < s.h; ++y)
              for (Index xx = 0; xx < s.w; ++xx) fn(n, c * r * r + i * r + j, y, xx, c, y * r + i, xx * r + j);
  };
  for_each([&](Index n, Index ci, Index y, Index xx, Index co, Index oy, Index ox) {
    out(n, co, oy, ox) = x.value()(n, ci, y, xx);
  });
  return detail::finish<Scalar>(std::move(out), {&x}, [for_each](Node<Scalar>& self) {
    if (auto* g = self.inputs[0]->grad_slot())
      for_each([&](Index n, Index ci, Index y, Index xx, Index co, Index oy, Index ox) {
        (*g)(n, ci, y, xx) += self.grad(n, co, oy, ox);
      });
  });
}

/// Spatial mean per sample and channel: (n, c, h, w) -> (n, c, 1, 1).
template <typename Scalar>
Var<Scalar> channel_mean(const Var<Scalar>& x) {
  const Shape s = x.shape();
  const Scalar inv = Scalar(1) / static_cast<Scalar>(s.plane());
  Tensor<Scalar> out(Shape{s.n, s.c, 1, 1});
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) out(n, c, 0, 0) = x.value().plane(n, c).sum() * inv;
  return detail::finish<Scalar>(std::move(out), {&x}, [s, inv](Node<Scalar>& self) {
    if (auto* g = self.inputs[0]->grad_slot())
      for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c) g->plane(n, c).array() += self.grad(n, c, 0, 0) * inv;
  });
}

/// sqrt(population variance + eps) per sample and channel.
template <typename Scalar>
Var<Scalar> channel_std(const Var<Scalar>& x, Scalar eps) {
  const Shape s = x.shape();
  const Scalar inv = Scalar(1) / static_cast<Scalar>(s.plane());
  Tensor<Scalar> mean(Shape{s.n, s.c, 1, 1});
  Tensor<Scalar> out(Shape{s.n, s.c, 1, 1});
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) {
      auto p = x.value().plane(n, c).array();
      const Scalar m = p.sum() * inv;
      mean(n, c, 0, 0) = m;
      out(n, c, 0, 0) = std::sqrt((p - m).square().sum() * inv + eps);
    }
  return detail::finish<Scalar>(std::move(out), {&x}, [s, inv, mean](Node<Scalar>& self) {
    auto& in = *self.inputs[0];
    if (auto* g = in.grad_slot())
      for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c) {
          const Scalar k = self.grad(n, c, 0, 0) * inv / self.value(n, c, 0, 0);
          g->plane(n, c).array() += k * (in.value.plane(n, c).array() - mean(n, c, 0, 0));
        }
  });
}

template <typename Scalar>
struct ChannelStats {
  Var<Scalar> mean;
  Var<Scalar> std;
};

template <typename Scalar>
ChannelStats<Scalar> channel_stats(const Var<Scalar>& x, Scalar eps) {
  return {channel_mean(x), channel_std(x, eps)};
}

/// Sum of all elements as a scalar (1, 1, 1, 1).
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Tensor<Scalar> out = Tensor<Scalar>::scalar(x.value().array().sum());
  return detail::finish<Scalar>(std::move(out), {&x}, [](Node<Scalar>& self) {
    if (auto* g = self.inputs[0]->grad_slot()) g->array() += self.grad.item();
  });
}

}  // namespace mbmfn
