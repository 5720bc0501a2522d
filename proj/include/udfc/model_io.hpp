#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "udfc/network.hpp"

namespace udfc {

inline constexpr const char* kFormatVersion = "udfc-1";
inline constexpr const char* kManifestName = "model.json";
inline constexpr const char* kWeightsName = "weights.bin";

/// Loads `model.json` + `weights.bin`. `path` is the model directory or the
/// manifest itself (the blob is looked up next to it).
///
/// Manifest offsets and lengths count 32-bit elements of weights.bin, not bytes.
Network load_model(const std::filesystem::path& path);

/// Validates `net`, then writes `model.json` and `weights.bin` into `dir`
/// (created if missing). Output is a pure function of the network.
void save_model(const Network& net, const std::filesystem::path& dir);

// Little-endian float32 / uint32 blobs shared by the model and dataset formats.
std::vector<float> read_f32_file(const std::filesystem::path& path);
void write_f32_file(const std::filesystem::path& path, std::span<const float> values);
std::vector<std::uint32_t> read_u32_file(const std::filesystem::path& path);
void write_u32_file(const std::filesystem::path& path, std::span<const std::uint32_t> values);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace udfc
