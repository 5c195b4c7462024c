#pragma once

#include "mbmfn/tensor.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace mbmfn {

struct ImageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Floating image with values in [0, 1]. One channel (Y) or three (RGB),
/// stored planar: data[(c * height + y) * width + x].
struct ImagePlane {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<float> data;

  ImagePlane() = default;
  ImagePlane(int h, int w, int c, float fill = 0.0f);

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  ImagePlane channel(int c) const;
  ImagePlane crop(int y0, int x0, int h, int w) const;
  bool operator==(const ImagePlane&) const = default;
};

/// 8-bit PNG -> RGB in [0, 1] (byte / 255). Gray and alpha inputs are
/// expanded/dropped; 16-bit files are rejected.
ImagePlane load_image(const std::filesystem::path& path);

/// Writes an 8-bit gray (1 channel) or RGB PNG with round-half-up quantization.
void save_image(const ImagePlane& img, const std::filesystem::path& path);

struct ImageSize {
  int height = 0;
  int width = 0;
};
/// Reads dimensions from the PNG header only.
ImageSize read_image_size(const std::filesystem::path& path);

/// round(v * 255) with halves rounded up, clamped to [0, 255].
inline int quantize(float v) {
  const double scaled = static_cast<double>(v) * 255.0 + 0.5;
  if (scaled <= 0) return 0;
  if (scaled >= 255) return 255;
  return static_cast<int>(scaled);
}

/// BT.601 studio-swing luma: (16 + 65.481 R + 128.553 G + 24.966 B) / 255.
ImagePlane rgb_to_y(const ImagePlane& rgb);
/// Y, Cb, Cr planes (studio swing, each scaled by 1/255).
ImagePlane rgb_to_ycbcr(const ImagePlane& rgb);
ImagePlane ycbcr_to_rgb(const ImagePlane& ycbcr);
/// Replicates a Y plane into a gray RGB image.
ImagePlane y_to_visual(const ImagePlane& y);

/// Keys cubic (a = -0.5) resampling with half-pixel centres and edge
/// clamping; the kernel is stretched by 1/scale when shrinking. Output is
/// clamped to [0, 1]. Same-size resizes return the input unchanged.
ImagePlane bicubic_resize(const ImagePlane& img, int out_h, int out_w);

/// Crops the bottom/right so both dimensions are divisible by `scale`.
ImagePlane modulo_crop(const ImagePlane& img, int scale);

/// Bicubic downsampling by `scale`; dimensions must already be divisible.
ImagePlane degrade(const ImagePlane& hr, int scale);

/// (1, channels, h, w) tensor view of an image and back (values clamped).
template <typename Scalar>
Tensor<Scalar> to_tensor(const ImagePlane& img) {
  Tensor<Scalar> t(Shape{1, img.channels, img.height, img.width});
  for (std::size_t i = 0; i < img.data.size(); ++i) t.array()[static_cast<Index>(i)] = static_cast<Scalar>(img.data[i]);
  return t;
}

template <typename Scalar>
ImagePlane from_tensor(const Tensor<Scalar>& t, Index sample = 0) {
  ImagePlane img(static_cast<int>(t.h()), static_cast<int>(t.w()), static_cast<int>(t.c()));
  const Index offset = t.offset(sample, 0, 0, 0);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double v = static_cast<double>(t.data()[offset + static_cast<Index>(i)]);
    img.data[i] = static_cast<float>(v < 0 ? 0 : (v > 1 ? 1 : v));
  }
  return img;
}

}  // namespace mbmfn
