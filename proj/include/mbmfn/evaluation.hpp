#pragma once

#include "mbmfn/config.hpp"
#include "mbmfn/dataset.hpp"
#include "mbmfn/image.hpp"
#include "mbmfn/params.hpp"

#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace mbmfn {

/// Value written to reports for identical images.
inline constexpr double kPsnrCap = 100.0;

/// PSNR in dB between two Y planes after 8-bit quantization and removing
/// `shave` pixels from every border. Identical inputs give +infinity.
double psnr(const ImagePlane& a, const ImagePlane& b, int shave);

/// Single-scale SSIM (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03,
/// L 255) on quantized, shaved Y planes, averaged over valid windows only.
double ssim(const ImagePlane& a, const ImagePlane& b, int shave);

/// Maps an LR Y plane to an HR Y plane of `scale` times the size.
using Upscaler = std::function<ImagePlane(const ImagePlane& lr, int scale)>;

Upscaler bicubic_upscaler();
Upscaler bilinear_upscaler();
/// Runs the network in real32. The store is captured by value.
Upscaler model_upscaler(const ModelConfig& cfg, ParamStore<float> store);

struct MetricRow {
  std::string image;
  double psnr_db = 0;  // may be +infinity
  double ssim = 0;
};

struct SkippedImage {
  std::string image;
  std::string reason;
};

struct MetricReport {
  std::string dataset;
  std::string model_id;
  int scale = 4;
  int shave = 4;
  std::vector<MetricRow> rows;
  std::vector<SkippedImage> skipped;

  /// Means of the per-image values, with PSNR capped as in the CSV.
  double mean_psnr() const;
  double mean_ssim() const;
};

/// Per manifest entry: HR Y (modulo-cropped), LR from the listed LR image or
/// bicubic degradation, upscale, metrics with shave = scale. Undecodable
/// images are skipped and recorded. Rows follow manifest order.
MetricReport evaluate(const Upscaler& upscaler, const DatasetManifest& manifest, int scale, std::string dataset,
                      std::string model_id);

/// `image,psnr_db,ssim` rows, then `AVG,<psnr>,<ssim>`; skipped images follow
/// as `# skipped` comment lines.
void write_csv(const MetricReport& report, std::ostream& out);
/// Aligned plain-text table with a footer for skipped images.
void write_table(const MetricReport& report, std::ostream& out);

}  // namespace mbmfn
