#pragma once

// On-disk layout of a run directory:
//
//   <run>/manifest      JSON document: configuration, per-checkpoint metadata
//                       and metrics, final sample weights
//   <run>/ckpt_<m>.bin  one binary file per ensemble member, m = 1..M
//   <run>/timing.json   wall-clock seconds per training segment
//
// Checkpoint files are little-endian:
//
//   u8      format version (kCheckpointVersion)
//   char[4] "CBNN"
//   u32     number of layer sizes L, then L x u64 layer sizes
//   f64     L2 coefficient
//   f64     lambda, f64 error, f64 z
//   u64     step, u64 seed, u8 is-final flag
//   u64     payload length P, then P x f64 parameters
//   u32     CRC-32 of the payload bytes

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cbnn/engine.hpp"
#include "cbnn/ensemble.hpp"

namespace cbnn {

inline constexpr std::uint8_t kCheckpointVersion = 1;
inline constexpr int kManifestVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const CheckpointRecord& record);

/// Throws UnsupportedVersion, ChecksumError (bad CRC, bad magic, truncated
/// or trailing bytes) or ShapeMismatch. `source` only labels the errors.
CheckpointRecord decode_checkpoint(std::span<const std::uint8_t> bytes, const std::filesystem::path& source);

void save_checkpoint(const CheckpointRecord& record, const std::filesystem::path& path);
CheckpointRecord load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_filename(std::size_t index);

/// Writes the manifest, one checkpoint file per member, and the timing file.
/// Creates `dir` if needed.
void save_run(const RunResult& run, const std::filesystem::path& dir);

/// Throws DanglingReference if the manifest names a missing checkpoint file
/// and StorageError for an unreadable or malformed manifest.
RunResult load_run(const std::filesystem::path& dir);

/// Manifest text for a record, as written by save_run.
std::string manifest_text(const RunRecord& record);

}  // namespace cbnn
