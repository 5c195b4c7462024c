#include "mbmfn/image.hpp"

#include <Eigen/Dense>
#include <png.h>

#include <algorithm>
#include <cmath>

namespace mbmfn {

ImagePlane::ImagePlane(int h, int w, int c, float fill) : height(h), width(w), channels(c) {
  if (h < 1 || w < 1 || (c != 1 && c != 3))
    throw ImageError("invalid image extent " + std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c));
  data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

ImagePlane ImagePlane::channel(int c) const {
  ImagePlane out(height, width, 1);
  std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(c) * height * width, static_cast<std::size_t>(height) * width,
              out.data.begin());
  return out;
}

ImagePlane ImagePlane::crop(int y0, int x0, int h, int w) const {
  if (y0 < 0 || x0 < 0 || y0 + h > height || x0 + w > width)
    throw ImageError("crop window out of bounds");
  ImagePlane out(h, w, channels);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = at(c, y0 + y, x0 + x);
  return out;
}

namespace {

struct PngReader {
  png_image image{};
  explicit PngReader(const std::filesystem::path& path) {
    image.version = PNG_IMAGE_VERSION;
    if (!std::filesystem::exists(path)) throw ImageError(path.string() + ": no such file");
    if (!png_image_begin_read_from_file(&image, path.c_str()))
      throw ImageError(path.string() + ": cannot decode PNG (" + image.message + ")");
  }
  ~PngReader() { png_image_free(&image); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;
};

}  // namespace

ImageSize read_image_size(const std::filesystem::path& path) {
  PngReader reader(path);
  return {static_cast<int>(reader.image.height), static_cast<int>(reader.image.width)};
}

ImagePlane load_image(const std::filesystem::path& path) {
  PngReader reader(path);
  png_image& image = reader.image;
  if (image.format & PNG_FORMAT_FLAG_LINEAR) throw ImageError(path.string() + ": only 8-bit PNG is supported");
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr))
    throw ImageError(path.string() + ": corrupt PNG (" + image.message + ")");

  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  ImagePlane out(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(c, y, x) = static_cast<float>(bytes[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
  return out;
}

void save_image(const ImagePlane& img, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> bytes(static_cast<std::size_t>(img.height) * img.width * img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        bytes[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
            static_cast<png_byte>(quantize(img.at(c, y, x)));
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw ImageError(path.string() + ": cannot write PNG (" + image.message + ")");
}

namespace {

const Eigen::Matrix3d& ycbcr_matrix() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 65.481, 128.553, 24.966,  //
                                    -37.797, -74.203, 112.0,                      //
                                    112.0, -93.786, -18.214)
                                       .finished();
  return m;
}

const Eigen::Vector3d kYCbCrOffset(16.0, 128.0, 128.0);

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void require_rgb(const ImagePlane& img) {
  if (img.channels != 3) throw ImageError("expected a 3-channel image");
}

}  // namespace

ImagePlane rgb_to_y(const ImagePlane& rgb) {
  require_rgb(rgb);
  ImagePlane y(rgb.height, rgb.width, 1);
  for (int r = 0; r < rgb.height; ++r)
    for (int c = 0; c < rgb.width; ++c) {
      const double v = 16.0 + 65.481 * rgb.at(0, r, c) + 128.553 * rgb.at(1, r, c) + 24.966 * rgb.at(2, r, c);
      y.at(0, r, c) = clamp01(v / 255.0);
    }
  return y;
}

ImagePlane rgb_to_ycbcr(const ImagePlane& rgb) {
  require_rgb(rgb);
  ImagePlane out(rgb.height, rgb.width, 3);
  for (int r = 0; r < rgb.height; ++r)
    for (int c = 0; c < rgb.width; ++c) {
      const Eigen::Vector3d px(rgb.at(0, r, c), rgb.at(1, r, c), rgb.at(2, r, c));
      const Eigen::Vector3d ycc = (ycbcr_matrix() * px + kYCbCrOffset) / 255.0;
      for (int k = 0; k < 3; ++k) out.at(k, r, c) = clamp01(ycc[k]);
    }
  return out;
}

ImagePlane ycbcr_to_rgb(const ImagePlane& ycbcr) {
  require_rgb(ycbcr);
  static const Eigen::Matrix3d inverse = ycbcr_matrix().inverse();
  ImagePlane out(ycbcr.height, ycbcr.width, 3);
  for (int r = 0; r < ycbcr.height; ++r)
    for (int c = 0; c < ycbcr.width; ++c) {
      const Eigen::Vector3d ycc(ycbcr.at(0, r, c), ycbcr.at(1, r, c), ycbcr.at(2, r, c));
      const Eigen::Vector3d px = inverse * (ycc * 255.0 - kYCbCrOffset);
      for (int k = 0; k < 3; ++k) out.at(k, r, c) = clamp01(px[k]);
    }
  return out;
}

ImagePlane y_to_visual(const ImagePlane& y) {
  if (y.channels != 1) throw ImageError("expected a 1-channel image");
  ImagePlane out(y.height, y.width, 3);
  for (int k = 0; k < 3; ++k) std::copy(y.data.begin(), y.data.end(), out.data.begin() + k * y.data.size());
  return out;
}

namespace {

double keys_cubic(double x) {
  const double a = std::abs(x);
  if (a <= 1) return 1.5 * a * a * a - 2.5 * a * a + 1.0;
  if (a < 2) return -0.5 * a * a * a + 2.5 * a * a - 4.0 * a + 2.0;
  return 0.0;
}

struct Taps {
  std::vector<int> index;
  std::vector<double> weight;
};

std::vector<Taps> resize_taps(int in, int out) {
  const double scale = static_cast<double>(out) / in;
  const double stretch = scale < 1 ? scale : 1.0;
  const double support = 2.0 / stretch;
  std::vector<Taps> taps(out);
  for (int o = 0; o < out; ++o) {
    const double centre = (o + 0.5) / scale - 0.5;
    const int first = static_cast<int>(std::floor(centre - support));
    const int last = static_cast<int>(std::ceil(centre + support));
    double total = 0;
    for (int i = first; i <= last; ++i) {
      const double w = stretch * keys_cubic(stretch * (centre - i));
      if (w == 0) continue;
      taps[o].index.push_back(std::clamp(i, 0, in - 1));
      taps[o].weight.push_back(w);
      total += w;
    }
    for (double& w : taps[o].weight) w /= total;
  }
  return taps;
}

}  // namespace

ImagePlane bicubic_resize(const ImagePlane& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ImageError("bicubic_resize: output dimensions must be >= 1");
  if (out_h == img.height && out_w == img.width) return img;
  const auto rows = resize_taps(img.height, out_h);
  const auto cols = resize_taps(img.width, out_w);

  ImagePlane out(out_h, out_w, img.channels);
  std::vector<double> tmp(static_cast<std::size_t>(out_h) * img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < img.width; ++x) {
        double acc = 0;
        for (std::size_t k = 0; k < rows[y].index.size(); ++k) acc += rows[y].weight[k] * img.at(c, rows[y].index[k], x);
        tmp[static_cast<std::size_t>(y) * img.width + x] = acc;
      }
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        double acc = 0;
        for (std::size_t k = 0; k < cols[x].index.size(); ++k)
          acc += cols[x].weight[k] * tmp[static_cast<std::size_t>(y) * img.width + cols[x].index[k]];
        out.at(c, y, x) = clamp01(acc);
      }
  }
  return out;
}

ImagePlane modulo_crop(const ImagePlane& img, int scale) {
  const int h = img.height - img.height % scale;
  const int w = img.width - img.width % scale;
  if (h < 1 || w < 1) throw ImageError("image smaller than the scale factor");
  if (h == img.height && w == img.width) return img;
  return img.crop(0, 0, h, w);
}

ImagePlane degrade(const ImagePlane& hr, int scale) {
  if (scale < 1 || hr.height % scale != 0 || hr.width % scale != 0)
    throw ImageError("degrade: " + std::to_string(hr.height) + "x" + std::to_string(hr.width) +
                     " is not divisible by scale " + std::to_string(scale));
  return bicubic_resize(hr, hr.height / scale, hr.width / scale);
}

}  // namespace mbmfn
