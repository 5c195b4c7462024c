#include "mbmfn/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

namespace mbmfn {

namespace fs = std::filesystem;

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ImageError(path.string() + ": cannot open manifest");
  DatasetManifest manifest;
  manifest.root = path.parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    ManifestEntry entry;
    const auto tab = line.find('\t');
    auto resolve = [&](const std::string& p) {
      fs::path f(p);
      return f.is_absolute() ? f : manifest.root / f;
    };
    entry.hr = resolve(line.substr(0, tab));
    if (tab != std::string::npos) entry.lr = resolve(line.substr(tab + 1));
    for (const auto& f : {std::optional<fs::path>(entry.hr), entry.lr})
      if (f && !fs::exists(*f))
        throw ImageError(path.string() + ":" + std::to_string(line_no) + ": missing file " + f->string());
    manifest.entries.push_back(std::move(entry));
  }
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.hr.string() < b.hr.string(); });
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ImageError(path.string() + ": cannot write manifest");
  const fs::path base = path.parent_path();
  for (const auto& e : manifest.entries) {
    out << fs::relative(e.hr, base).generic_string();
    if (e.lr) out << '\t' << fs::relative(*e.lr, base).generic_string();
    out << '\n';
  }
}

ImagePlane load_hr_y(const fs::path& path, int scale) { return modulo_crop(rgb_to_y(load_image(path)), scale); }

PatchSampler::PatchSampler(DatasetManifest manifest, SamplerOptions options, std::ostream* warnings)
    : manifest_(std::move(manifest)), options_(options) {
  if (options_.scale < 1 || options_.hr_patch % options_.scale != 0)
    throw std::invalid_argument("hr_patch " + std::to_string(options_.hr_patch) + " is not divisible by scale " +
                                std::to_string(options_.scale));
  for (std::size_t i = 0; i < manifest_.entries.size(); ++i) {
    const auto& e = manifest_.entries[i];
    try {
      const ImageSize size = read_image_size(e.hr);
      const int h = size.height - size.height % options_.scale;
      const int w = size.width - size.width % options_.scale;
      if (h < options_.hr_patch || w < options_.hr_patch) {
        if (warnings)
          *warnings << "warning: skipping " << e.hr.string() << " (" << size.height << "x" << size.width
                    << " is smaller than the " << options_.hr_patch << " patch)\n";
        continue;
      }
      if (options_.precomputed_lr && !e.lr) {
        if (warnings) *warnings << "warning: skipping " << e.hr.string() << " (no precomputed LR listed)\n";
        continue;
      }
      usable_.push_back(i);
    } catch (const ImageError& err) {
      if (warnings) *warnings << "warning: skipping " << err.what() << '\n';
    }
  }
  if (usable_.empty()) throw ImageError("dataset has no usable images for " + std::to_string(options_.hr_patch) +
                                       "px patches");
}

const PatchSampler::Cached& PatchSampler::fetch(std::size_t entry) {
  auto it = cache_.find(entry);
  if (it != cache_.end()) return it->second;
  if (options_.cache_images > 0 && cache_order_.size() >= options_.cache_images) {
    cache_.erase(cache_order_.front());
    cache_order_.erase(cache_order_.begin());
  }
  const auto& e = manifest_.entries[entry];
  Cached c;
  c.hr = load_hr_y(e.hr, options_.scale);
  if (options_.precomputed_lr) {
    c.lr = rgb_to_y(load_image(*e.lr));
    if (c.lr->height * options_.scale < c.hr.height || c.lr->width * options_.scale < c.hr.width)
      throw ImageError(e.lr->string() + ": precomputed LR is smaller than HR / scale");
  }
  cache_order_.push_back(entry);
  return cache_.emplace(entry, std::move(c)).first->second;
}

namespace {

ImagePlane flip_transpose(const ImagePlane& img, bool flip_v, bool flip_h, bool transpose) {
  const int h = transpose ? img.width : img.height;
  const int w = transpose ? img.height : img.width;
  ImagePlane out(h, w, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int sy = transpose ? x : y;
        int sx = transpose ? y : x;
        if (flip_v) sy = img.height - 1 - sy;
        if (flip_h) sx = img.width - 1 - sx;
        out.at(c, y, x) = img.at(c, sy, sx);
      }
  return out;
}

}  // namespace

PatchPair PatchSampler::sample(std::mt19937_64& rng) {
  const int s = options_.scale;
  const int p = options_.hr_patch;
  PatchPair pair;
  pair.source = usable_[uniform_index(rng, usable_.size())];
  const Cached& img = fetch(pair.source);
  pair.origin_y = s * static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>((img.hr.height - p) / s + 1)));
  pair.origin_x = s * static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>((img.hr.width - p) / s + 1)));
  pair.hr = img.hr.crop(pair.origin_y, pair.origin_x, p, p);
  if (img.lr)
    pair.lr = img.lr->crop(pair.origin_y / s, pair.origin_x / s, p / s, p / s);

  if (options_.augment) {
    const auto bits = rng();
    const bool fv = bits & 1, fh = bits & 2, tr = bits & 4;
    pair.hr = flip_transpose(pair.hr, fv, fh, tr);
    if (img.lr) pair.lr = flip_transpose(pair.lr, fv, fh, tr);
  }
  if (!img.lr) pair.lr = degrade(pair.hr, s);
  return pair;
}

}  // namespace mbmfn
