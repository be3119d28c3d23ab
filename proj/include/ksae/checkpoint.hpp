#pragma once

#include <filesystem>

#include "ksae/io.hpp"
#include "ksae/model.hpp"

namespace ksae {

// Model checkpoint, all integers and reals little-endian:
//
//   "KSAE"                      4 bytes
//   version                     u32 (= 1)
//   input_dim, hidden_dim       u64, u64
//   W                           input_dim * hidden_dim f64, row-major
//   b                           hidden_dim f64
//   b_out                       input_dim f64
//   crc32                       u32 over every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

Bytes serialize_checkpoint(const KsaeModel& model);
KsaeModel parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const KsaeModel& model, const std::filesystem::path& path);
KsaeModel load_checkpoint(const std::filesystem::path& path);

}  // namespace ksae
