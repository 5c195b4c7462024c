#pragma once

#include "mbmfn/tensor.hpp"

#include <algorithm>
#include <cstring>

namespace mbmfn::kernels {

// Column layout: row (ci * k + ky) * k + kx, one column per output pixel.
// Zero padding of (k - 1) / 2, stride 1.
template <typename Scalar>
void im2col(const Scalar* src, Index channels, Index h, Index w, Index k, Scalar* cols) {
  const Index pad = (k - 1) / 2;
  const Index hw = h * w;
  for (Index ci = 0; ci < channels; ++ci) {
    const Scalar* plane = src + ci * hw;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = cols + ((ci * k + ky) * k + kx) * hw;
        const Index dy = ky - pad;
        const Index dx = kx - pad;
        const Index x_lo = std::max<Index>(0, -dx);
        const Index x_hi = std::min<Index>(w, w - dx);
        for (Index y = 0; y < h; ++y) {
          Scalar* out = row + y * w;
          const Index sy = y + dy;
          if (sy < 0 || sy >= h || x_lo >= x_hi) {
            std::fill(out, out + w, Scalar(0));
            continue;
          }
          std::fill(out, out + x_lo, Scalar(0));
          std::memcpy(out + x_lo, plane + sy * w + x_lo + dx, sizeof(Scalar) * (x_hi - x_lo));
          std::fill(out + x_hi, out + w, Scalar(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back onto the image, accumulating.
template <typename Scalar>
void col2im_add(const Scalar* cols, Index channels, Index h, Index w, Index k, Scalar* dst) {
  const Index pad = (k - 1) / 2;
  const Index hw = h * w;
  for (Index ci = 0; ci < channels; ++ci) {
    Scalar* plane = dst + ci * hw;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* row = cols + ((ci * k + ky) * k + kx) * hw;
        const Index dy = ky - pad;
        const Index dx = kx - pad;
        const Index x_lo = std::max<Index>(0, -dx);
        const Index x_hi = std::min<Index>(w, w - dx);
        for (Index y = 0; y < h; ++y) {
          const Index sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const Scalar* in = row + y * w;
          Scalar* out = plane + sy * w + dx;
          for (Index x = x_lo; x < x_hi; ++x) out[x] += in[x];
        }
      }
    }
  }
}

}  // namespace mbmfn::kernels
