#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>

#include "sigmasr/models.hpp"

namespace sigmasr {

// Binary layout, all integers and floats little-endian:
//   magic "SIGMASR\0", u32 version
//   i32 in_channels, i32 feature_channels, i32 n_resblocks, i32 scale
//   u8 has_sigma, i32 sigma_channels, i32 sigma_blocks, i32 sigma_kernel, u8 sigma_tap
//   u32 tensor_count, then per tensor in declaration order:
//     u32 name_length, name bytes, u32 rank, u64 extents[rank], f64 values[numel]
// A sibling text manifest (<path>.manifest) lists name, shape and an FNV-1a
// checksum of each tensor's value bytes.

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const TwoBranchModel& model, const std::filesystem::path& path);
TwoBranchModel load_checkpoint(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

/// 64-bit FNV-1a over the little-endian bytes of the values.
std::uint64_t fnv1a64(std::span<const double> values);
std::uint64_t fnv1a64_bytes(std::span<const unsigned char> bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace sigmasr
