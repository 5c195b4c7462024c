#pragma once

#include "mbmfn/image.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mbmfn {

struct ManifestEntry {
  std::filesystem::path hr;
  std::optional<std::filesystem::path> lr;  // precomputed LR for the manifest's scale

  bool operator==(const ManifestEntry&) const = default;
};

/// Plain-text list of HR images, one per line, optionally followed by a tab
/// and a precomputed LR image. Relative paths resolve against the manifest's
/// directory; blank lines and lines starting with '#' are ignored. Entries
/// are sorted lexicographically by HR path.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
};

/// Throws ImageError when the manifest or any listed file is missing.
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct PatchPair {
  ImagePlane hr;  // Y, hr_patch x hr_patch
  ImagePlane lr;  // Y, hr_patch / scale square
  std::size_t source = 0;
  int origin_y = 0;  // HR crop origin, multiples of scale
  int origin_x = 0;
};

struct SamplerOptions {
  int scale = 4;
  int hr_patch = 192;
  bool precomputed_lr = false;
  bool augment = false;  // random flips and transposes
  std::size_t cache_images = 16;
};

/// Draws HR/LR Y-channel patch pairs from a manifest. Deterministic for a
/// given rng state.
class PatchSampler {
 public:
  /// Images smaller than the patch (after modulo cropping) are skipped with a
  /// note on `warnings`; throws when nothing usable remains.
  PatchSampler(DatasetManifest manifest, SamplerOptions options, std::ostream* warnings = nullptr);

  PatchPair sample(std::mt19937_64& rng);

  std::size_t usable_images() const { return usable_.size(); }
  const SamplerOptions& options() const { return options_; }

 private:
  struct Cached {
    ImagePlane hr;
    std::optional<ImagePlane> lr;
  };
  const Cached& fetch(std::size_t entry);

  DatasetManifest manifest_;
  SamplerOptions options_;
  std::vector<std::size_t> usable_;
  std::map<std::size_t, Cached> cache_;
  std::vector<std::size_t> cache_order_;
};

/// Y plane of an HR image, modulo-cropped to the scale.
ImagePlane load_hr_y(const std::filesystem::path& path, int scale);

/// Uniform integer in [0, n) from a 64-bit engine, platform independent.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

}  // namespace mbmfn
