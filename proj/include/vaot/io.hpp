#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vaot/config.hpp"
#include "vaot/tensor.hpp"

namespace vaot {

// Raw tensor container: magic "VAOT1", u8 dtype tag (1 = f32, 2 = f64),
// u32 LE ndim, ndim x u32 LE dims, row-major little-endian payload.
// Images are stored as f32; checkpoints use f64 so save/restore is exact.
void write_raw_tensor(const std::filesystem::path& path, const Tensor& t, bool f64 = false);
Tensor read_raw_tensor(const std::filesystem::path& path);

// 8-bit binary PGM (P5), maxval 255; values quantized with round(v * 255).
void write_pgm(const std::filesystem::path& path, const Grid& g);
Grid read_pgm(const std::filesystem::path& path);

Grid tensor_to_grid(const Tensor& t);

// Line-oriented dataset manifest: role<TAB>seed<TAB>value.
struct ManifestRow {
  std::string role;
  std::uint64_t seed = 0;
  std::string value;  // path for image rows, numeric string for eval_ssim rows
};
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

// `key = value` config file; unknown keys are rejected (ConfigError naming
// the key). Missing keys keep their defaults.
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::filesystem::path& path);
std::string config_to_text(const TrainConfig& cfg);

std::string format_double(double v);  // shortest round-trippable decimal

}  // namespace vaot
