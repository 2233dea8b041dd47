#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dn2n/model.hpp"

namespace dn2n::nn {

inline constexpr std::uint32_t kModelFormatVersion = 1;

// Model file layout (all integers little-endian):
//   "DNM1"  u32 version
//   u32 in_channels  u32 out_channels  u32 kernel  f64 leaky_slope
//   u32 level_count  u32 width[level_count]
//   u64 spec_hash (FNV-1a of the descriptor bytes from in_channels to the last width)
//   u64 parameter_count  f64 parameters[parameter_count] in canonical order

struct SavedModel {
  ModelSpec spec;
  ParamStore params;
};

std::vector<std::uint8_t> encode_model(const ModelSpec& spec, const ParamStore& params);
SavedModel decode_model(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, const ModelSpec& spec, const ParamStore& params);
SavedModel load_model(const std::filesystem::path& path);

/// Descriptor bytes hashed into the header.
std::vector<std::uint8_t> encode_spec_descriptor(const ModelSpec& spec);

}  // namespace dn2n::nn
