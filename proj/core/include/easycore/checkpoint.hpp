#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "easycore/model.hpp"

namespace easycore {

// Binary layout, little-endian:
//   "EZC1"
//   u32 tensor count
//   per tensor: u16 name length, UTF-8 name, u8 rank, u32 dims[rank], f64 values
std::vector<std::uint8_t> encode_checkpoint(const Model& model);
std::vector<NamedParameter> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Loads a checkpoint and infers the model config from tensor shapes. When
/// `expected` is given, a differing config is an error.
Model load_checkpoint(const std::filesystem::path& path,
                      const std::optional<ModelConfig>& expected = std::nullopt);

ModelConfig infer_model_config(const std::vector<NamedParameter>& params);

}  // namespace easycore
