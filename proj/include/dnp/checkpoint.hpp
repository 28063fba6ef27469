#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dnp/model.hpp"

namespace dnp {

// Binary checkpoint, all integers and floats little-endian:
//
//   char[4]  magic "DNPC"
//   u32      format version (kCheckpointVersion)
//   u8       model kind (0 invariant, 1 equivariant)
//   u32      n_layers T
//   u32      feature_width F
//   u32      n_rbf
//   u32      head_hidden
//   f64      cutoff (Angstrom)
//   u32      entry count
//   entries, sorted by name:
//     u32      name length in bytes, then UTF-8 name
//     u32      rank
//     u64      dims[rank]
//     f64      payload[prod(dims)], row-major
//   u64      FNV-1a 64 hash of every preceding byte
//
// Saving the same parameters always produces the same bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParameters params;
};

std::vector<std::uint8_t> encode_checkpoint(const ModelParameters& params, const ModelConfig& config);
// Throws CheckpointError on bad magic, version, hash, truncation or any
// inconsistency.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ModelParameters& params, const ModelConfig& config,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dnp
