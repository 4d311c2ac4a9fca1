#pragma once

#include <filesystem>

#include <json.hpp>

#include "narstar/autodiff.hpp"

namespace narstar {

/// Named-parameter container on disk.
///
/// Layout (little-endian):
///   "NSTRCKPT" | u32 version | u32 len + JSON metadata | u32 parameter count |
///   per parameter: u32 len + name, u64 rows, u64 cols, rows*cols f64 |
///   u32 CRC-32 of all preceding bytes.
/// The metadata carries the model configuration echo.
struct Checkpoint {
  nlohmann::json metadata;
  ad::ParameterStore parameters;
};

void save_checkpoint(const std::filesystem::path& path, const ad::ParameterStore& parameters,
                     const nlohmann::json& metadata);

/// Throws FormatError or ChecksumMismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace narstar
