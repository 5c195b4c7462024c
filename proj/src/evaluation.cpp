#include "mbmfn/evaluation.hpp"

#include "mbmfn/blocks.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mbmfn {

namespace {

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Plane quantized(const ImagePlane& img, int shave) {
  const int h = img.height - 2 * shave, w = img.width - 2 * shave;
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(y, x) = quantize(img.at(0, y + shave, x + shave));
  return out;
}

void check_pair(const ImagePlane& a, const ImagePlane& b, int shave, const char* what) {
  if (a.channels != 1 || b.channels != 1) throw std::invalid_argument(std::string(what) + ": expects Y planes");
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument(std::string(what) + ": size mismatch " + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width));
  if (shave < 0 || 2 * shave >= std::min(a.height, a.width))
    throw std::invalid_argument(std::string(what) + ": shave " + std::to_string(shave) + " too large");
}

Eigen::ArrayXd gaussian_window() {
  Eigen::ArrayXd g(11);
  for (int i = 0; i < 11; ++i) g[i] = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
  return g / g.sum();
}

// Valid-mode separable filtering with the normalized Gaussian.
Plane filter_valid(const Plane& p) {
  static const Eigen::ArrayXd g = gaussian_window();
  const Eigen::Index h = p.rows() - 10, w = p.cols() - 10;
  Plane rows(h, p.cols());
  for (Eigen::Index y = 0; y < h; ++y) {
    rows.row(y).setZero();
    for (int k = 0; k < 11; ++k) rows.row(y) += g[k] * p.row(y + k);
  }
  Plane out(h, w);
  for (Eigen::Index x = 0; x < w; ++x) {
    out.col(x).setZero();
    for (int k = 0; k < 11; ++k) out.col(x) += g[k] * rows.col(x + k);
  }
  return out;
}

}  // namespace

double psnr(const ImagePlane& a, const ImagePlane& b, int shave) {
  check_pair(a, b, shave, "psnr");
  const double mse = (quantized(a, shave) - quantized(b, shave)).square().mean();
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const ImagePlane& a, const ImagePlane& b, int shave) {
  check_pair(a, b, shave, "ssim");
  if (std::min(a.height, a.width) - 2 * shave < 11)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window after shaving");
  const Plane x = quantized(a, shave), y = quantized(b, shave);
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  const Plane mx = filter_valid(x), my = filter_valid(y);
  // Written so that x == y yields numerator == denominator exactly.
  const Plane vx = filter_valid(x * x) - mx * mx;
  const Plane vy = filter_valid(y * y) - my * my;
  const Plane cxy = filter_valid(x * y) - mx * my;
  const Plane num = (mx * my + mx * my + c1) * (cxy + cxy + c2);
  const Plane den = (mx * mx + my * my + c1) * (vx + vy + c2);
  return (num / den).mean();
}

Upscaler bicubic_upscaler() {
  return [](const ImagePlane& lr, int scale) { return bicubic_resize(lr, lr.height * scale, lr.width * scale); };
}

Upscaler bilinear_upscaler() {
  return [](const ImagePlane& lr, int scale) {
    const auto up = upsample_bilinear(Var<double>::constant(to_tensor<double>(lr)), scale);
    return from_tensor(up.value());
  };
}

Upscaler model_upscaler(const ModelConfig& cfg, ParamStore<float> store) {
  return [cfg, store = std::move(store)](const ImagePlane& lr, int scale) {
    if (scale != cfg.scale)
      throw std::invalid_argument("model was built for x" + std::to_string(cfg.scale) + ", asked for x" +
                                  std::to_string(scale));
    return from_tensor(run_model(cfg, store, to_tensor<float>(lr)));
  };
}

namespace {

double capped(double p) { return std::min(p, kPsnrCap); }

}  // namespace

double MetricReport::mean_psnr() const {
  if (rows.empty()) return 0;
  double total = 0;
  for (const auto& r : rows) total += capped(r.psnr_db);
  return total / static_cast<double>(rows.size());
}

double MetricReport::mean_ssim() const {
  if (rows.empty()) return 0;
  double total = 0;
  for (const auto& r : rows) total += r.ssim;
  return total / static_cast<double>(rows.size());
}

MetricReport evaluate(const Upscaler& upscaler, const DatasetManifest& manifest, int scale, std::string dataset,
                      std::string model_id) {
  MetricReport report;
  report.dataset = std::move(dataset);
  report.model_id = std::move(model_id);
  report.scale = scale;
  report.shave = scale;
  for (const auto& entry : manifest.entries) {
    const std::string name = entry.hr.stem().string();
    try {
      const ImagePlane hr = load_hr_y(entry.hr, scale);
      const ImagePlane lr = entry.lr ? rgb_to_y(load_image(*entry.lr)) : degrade(hr, scale);
      if (lr.height * scale != hr.height || lr.width * scale != hr.width)
        throw ImageError(name + ": LR size does not match HR / scale");
      const ImagePlane sr = upscaler(lr, scale);
      report.rows.push_back({name, psnr(sr, hr, scale), ssim(sr, hr, scale)});
    } catch (const std::exception& e) {
      report.skipped.push_back({name, e.what()});
    }
  }
  return report;
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

void write_csv(const MetricReport& report, std::ostream& out) {
  out << "image,psnr_db,ssim\n";
  for (const auto& r : report.rows) out << r.image << ',' << fixed(capped(r.psnr_db), 4) << ',' << fixed(r.ssim, 6) << '\n';
  out << "AVG," << fixed(report.mean_psnr(), 4) << ',' << fixed(report.mean_ssim(), 6) << '\n';
  for (const auto& s : report.skipped) out << "# skipped " << s.image << ": " << s.reason << '\n';
}

void write_table(const MetricReport& report, std::ostream& out) {
  std::size_t width = 7;
  for (const auto& r : report.rows) width = std::max(width, r.image.size());
  out << report.dataset << " x" << report.scale << "  model " << report.model_id << "  shave " << report.shave << '\n';
  out << std::left << std::setw(static_cast<int>(width)) << "image" << "  " << std::right << std::setw(9)
      << "PSNR(dB)" << "  " << std::setw(8) << "SSIM" << '\n';
  auto line = [&](const std::string& name, double p, double s) {
    out << std::left << std::setw(static_cast<int>(width)) << name << "  " << std::right << std::setw(9)
        << fixed(p, 2) << "  " << std::setw(8) << fixed(s, 4) << '\n';
  };
  for (const auto& r : report.rows) line(r.image, capped(r.psnr_db), r.ssim);
  out << std::string(width + 21, '-') << '\n';
  line("average", report.mean_psnr(), report.mean_ssim());
  if (!report.skipped.empty()) {
    out << "skipped " << report.skipped.size() << " image(s):\n";
    for (const auto& s : report.skipped) out << "  " << s.image << ": " << s.reason << '\n';
  }
}

}  // namespace mbmfn
