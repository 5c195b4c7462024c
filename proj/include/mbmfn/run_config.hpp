#pragma once

#include "mbmfn/config.hpp"
#include "mbmfn/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mbmfn {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::string train_manifest;
  std::vector<std::string> eval_manifests;  // comma separated in the file
  std::string checkpoint_dir = "runs/checkpoints";
  std::string report_dir = "runs/reports";

  bool operator==(const DataConfig&) const = default;
};

/// Everything a command needs. Text form is one `section.key = value` per
/// line with sections model, train and data; '#' starts a comment.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  bool operator==(const RunConfig&) const = default;
};

/// Sets one key. Unknown keys and malformed values throw ConfigError with
/// the key in the message.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
/// Parses `key=value` (as given to --set).
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Starts from defaults; `source` prefixes error messages.
RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key, defaults included, in a fixed order. Doubles use the shortest
/// representation that reads back exactly.
std::string serialize(const RunConfig& cfg);
std::string serialize(const ModelConfig& cfg);
/// Parses text holding only `model.` keys.
ModelConfig parse_model_config(const std::string& text);

}  // namespace mbmfn
