#pragma once

#include "mbmfn/config.hpp"
#include "mbmfn/params.hpp"
#include "mbmfn/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

namespace mbmfn {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  ParamStore<float> params;
  std::optional<TrainState> state;
};

// Layout (all integers little-endian):
//   "MBMF" | u32 version | u32 len, model config text
//   u32 count, then per tensor:
//     u32 name len, name | u8 dtype (1 = real32) | u32 n, c, h, w | payload
//   u8 has_state; if 1:
//     i32 epoch | i64 iteration | f64 lr | f64 best_loss | i64 adam step
//     u32 len, rng state text | u32 count, moment tensors as above
//     (names "m:<param>" and "v:<param>")
//   u32 CRC-32 of every preceding byte
std::vector<unsigned char> encode_checkpoint(const ModelConfig& model, const ParamStore<float>& params,
                                             const TrainState* state = nullptr);
/// Rejects bad magic, unknown versions, truncation (with the byte offset),
/// checksum mismatches and parameter sets that do not match the config.
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& source = "<memory>");

/// Writes through a temporary file and renames, so a crash never leaves a
/// half-written checkpoint under `path`.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& model, const ParamStore<float>& params,
                     const TrainState* state = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mbmfn
